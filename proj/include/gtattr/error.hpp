#pragma once

#include <stdexcept>
#include <string>

namespace gtattr {

// Input that fails validation (malformed files, bad arguments, shape errors).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// A request that is well-formed but exceeds a size guard, e.g. exact
// enumeration over more than 20 players.
class GuardError : public std::runtime_error {
 public:
  explicit GuardError(const std::string& what) : std::runtime_error(what) {}
};

// An oracle produced NaN or infinity.
class NonFiniteError : public std::runtime_error {
 public:
  explicit NonFiniteError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace gtattr
