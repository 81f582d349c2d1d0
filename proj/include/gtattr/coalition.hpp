#pragma once

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "gtattr/error.hpp"

namespace gtattr {

// Hard cap for the 64-bit coalition representation.
inline constexpr std::size_t kMaxPlayers = 63;
// Cap for anything that enumerates all 2^n coalitions.
inline constexpr std::size_t kMaxExactPlayers = 20;

/// A subset of players 0..n-1 stored as a bit set.
class Coalition {
 public:
  constexpr Coalition() = default;
  constexpr explicit Coalition(std::uint64_t bits) : bits_(bits) {}
  Coalition(std::initializer_list<std::size_t> members) {
    for (auto i : members) bits_ |= bit(i);
  }

  static Coalition from_members(const std::vector<std::size_t>& members) {
    Coalition c;
    for (auto i : members) c.bits_ |= bit(i);
    return c;
  }

  /// {0, ..., n-1}
  static constexpr Coalition grand(std::size_t n) {
    return Coalition(n >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << n) - 1);
  }

  constexpr std::uint64_t bits() const { return bits_; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::size_t size() const { return static_cast<std::size_t>(std::popcount(bits_)); }
  constexpr bool contains(std::size_t i) const { return (bits_ >> i) & 1U; }
  constexpr bool subset_of(Coalition other) const { return (bits_ & ~other.bits_) == 0; }

  constexpr Coalition with(std::size_t i) const { return Coalition(bits_ | bit(i)); }
  constexpr Coalition without(std::size_t i) const { return Coalition(bits_ & ~bit(i)); }

  std::vector<std::size_t> members() const {
    std::vector<std::size_t> out;
    for (auto b = bits_; b != 0; b &= b - 1) out.push_back(static_cast<std::size_t>(std::countr_zero(b)));
    return out;
  }

  /// Highest member index + 1, or 0 for the empty coalition.
  constexpr std::size_t span() const { return 64 - static_cast<std::size_t>(std::countl_zero(bits_)); }

  friend constexpr Coalition operator|(Coalition a, Coalition b) { return Coalition(a.bits_ | b.bits_); }
  friend constexpr Coalition operator&(Coalition a, Coalition b) { return Coalition(a.bits_ & b.bits_); }
  friend constexpr bool operator==(Coalition a, Coalition b) = default;

 private:
  static constexpr std::uint64_t bit(std::size_t i) { return std::uint64_t{1} << i; }
  std::uint64_t bits_ = 0;
};

/// The player set N = {0, ..., n-1}, with optional display labels and an
/// optional grouping of base units (e.g. tokens) into players.
class PlayerSet {
 public:
  PlayerSet() = default;

  explicit PlayerSet(std::size_t n, std::vector<std::string> labels = {},
                     std::vector<std::vector<std::size_t>> grouping = {})
      : n_(n), labels_(std::move(labels)), grouping_(std::move(grouping)) {
    if (n_ < 1 || n_ > kMaxPlayers) {
      throw ValidationError("player count must be in [1, 63], got " + std::to_string(n_));
    }
    if (!labels_.empty() && labels_.size() != n_) {
      throw ValidationError("expected " + std::to_string(n_) + " labels, got " +
                            std::to_string(labels_.size()));
    }
    if (!grouping_.empty()) {
      if (grouping_.size() != n_) {
        throw ValidationError("grouping must have one group per player");
      }
      validate_partition(grouping_);
    }
  }

  std::size_t size() const { return n_; }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<std::vector<std::size_t>>& grouping() const { return grouping_; }
  bool grouped() const { return !grouping_.empty(); }
  Coalition all() const { return Coalition::grand(n_); }

  /// Display label for player i; falls back to the index.
  std::string label(std::size_t i) const {
    return labels_.empty() ? std::to_string(i) : labels_.at(i);
  }

  /// Throws unless `groups` is a partition of {0..units-1} into non-empty groups,
  /// where units is one past the largest member.
  static std::size_t validate_partition(const std::vector<std::vector<std::size_t>>& groups) {
    if (groups.empty()) throw ValidationError("grouping is empty");
    std::size_t units = 0;
    for (const auto& g : groups) {
      if (g.empty()) throw ValidationError("grouping contains an empty group");
      for (auto u : g) units = std::max(units, u + 1);
    }
    std::vector<int> seen(units, 0);
    for (const auto& g : groups) {
      for (auto u : g) {
        if (seen[u]++ != 0) {
          throw ValidationError("base unit " + std::to_string(u) + " appears in more than one group");
        }
      }
    }
    for (std::size_t u = 0; u < units; ++u) {
      if (seen[u] == 0) throw ValidationError("base unit " + std::to_string(u) + " is in no group");
    }
    return units;
  }

 private:
  std::size_t n_ = 1;
  std::vector<std::string> labels_;
  std::vector<std::vector<std::size_t>> grouping_;
};

}  // namespace gtattr
