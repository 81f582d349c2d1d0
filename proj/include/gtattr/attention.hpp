#pragma once

// Layered attention matrices and the attention interchange file format.

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "gtattr/error.hpp"
#include "gtattr/game.hpp"
#include "json.hpp"

namespace gtattr {

/// Row-major n x n matrix.
class SquareMatrix {
 public:
  SquareMatrix() = default;
  explicit SquareMatrix(std::size_t n, double fill = 0.0) : n_(n), data_(n * n, fill) {}

  static SquareMatrix identity(std::size_t n) {
    SquareMatrix m(n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static SquareMatrix from_rows(const std::vector<std::vector<double>>& rows) {
    SquareMatrix m(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != rows.size()) throw ValidationError("matrix is not square");
      for (std::size_t c = 0; c < rows.size(); ++c) m(r, c) = rows[r][c];
    }
    return m;
  }

  std::size_t size() const { return n_; }
  double& operator()(std::size_t row, std::size_t col) { return data_[row * n_ + col]; }
  double operator()(std::size_t row, std::size_t col) const { return data_[row * n_ + col]; }

  double row_sum(std::size_t row) const {
    double s = 0.0;
    for (std::size_t c = 0; c < n_; ++c) s += (*this)(row, c);
    return s;
  }

  double col_sum(std::size_t col) const {
    double s = 0.0;
    for (std::size_t r = 0; r < n_; ++r) s += (*this)(r, col);
    return s;
  }

  std::vector<std::vector<double>> rows() const {
    std::vector<std::vector<double>> out(n_, std::vector<double>(n_));
    for (std::size_t r = 0; r < n_; ++r) {
      for (std::size_t c = 0; c < n_; ++c) out[r][c] = (*this)(r, c);
    }
    return out;
  }

  /// Divides each row by its sum. Rows summing to zero are left unchanged.
  void normalize_rows() {
    for (std::size_t r = 0; r < n_; ++r) {
      const double s = row_sum(r);
      if (s > 0.0) {
        for (std::size_t c = 0; c < n_; ++c) (*this)(r, c) /= s;
      }
    }
  }

  friend SquareMatrix operator*(const SquareMatrix& a, const SquareMatrix& b) {
    SquareMatrix out(a.n_);
    for (std::size_t i = 0; i < a.n_; ++i) {
      for (std::size_t k = 0; k < a.n_; ++k) {
        const double aik = a(i, k);
        for (std::size_t j = 0; j < a.n_; ++j) out(i, j) += aik * b(k, j);
      }
    }
    return out;
  }

  friend bool operator==(const SquareMatrix&, const SquareMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

/// Maximum allowed deviation of a raw row sum from 1 before it is rejected.
inline constexpr double kRowSumTolerance = 1e-4;
inline constexpr double kRenormalizeThreshold = 1e-12;

/// L layers of n x n row-stochastic attention. layers[0] is nearest the
/// input; layers[l](j, i) is the attention query j pays to key i.
struct AttentionStack {
  std::size_t n = 0;
  std::vector<SquareMatrix> layers;
  std::vector<std::string> tokens;  // empty or n entries
  std::string head_reduction = "mean";

  std::size_t num_layers() const { return layers.size(); }

  std::string token(std::size_t i) const { return tokens.empty() ? std::to_string(i) : tokens.at(i); }
};

namespace detail {

inline bool valid_head_reduction(const std::string& s) {
  if (s == "mean" || s == "max") return true;
  constexpr std::string_view prefix = "single:";
  if (s.rfind(prefix, 0) != 0 || s.size() == prefix.size()) return false;
  for (std::size_t i = prefix.size(); i < s.size(); ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
  }
  return true;
}

}  // namespace detail

/// Validates shape, entries and row sums, then renormalizes every row to sum
/// to exactly 1 (up to rounding).
inline AttentionStack validate_attention(AttentionStack stack) {
  if (stack.n < 1) throw ValidationError("attention stack needs n >= 1");
  if (stack.n > kMaxPlayers) throw ValidationError("attention stack supports at most 63 tokens");
  if (stack.layers.empty()) throw ValidationError("attention stack needs at least one layer (L >= 1)");
  if (!stack.tokens.empty() && stack.tokens.size() != stack.n) {
    throw ValidationError("tokens has " + std::to_string(stack.tokens.size()) + " entries, expected " +
                          std::to_string(stack.n));
  }
  if (!detail::valid_head_reduction(stack.head_reduction)) {
    throw ValidationError("head_reduction must be mean, max or single:k, got '" + stack.head_reduction + "'");
  }
  for (std::size_t l = 0; l < stack.layers.size(); ++l) {
    auto& a = stack.layers[l];
    if (a.size() != stack.n) throw ValidationError("layer " + std::to_string(l) + " is not n x n");
    for (std::size_t j = 0; j < stack.n; ++j) {
      for (std::size_t i = 0; i < stack.n; ++i) {
        const double x = a(j, i);
        if (!std::isfinite(x) || x < 0.0 || x > 1.0) {
          throw ValidationError("layer " + std::to_string(l) + " row " + std::to_string(j) + " column " +
                                std::to_string(i) + ": entry " + std::to_string(x) + " outside [0, 1]");
        }
      }
      const double s = a.row_sum(j);
      if (std::abs(s - 1.0) > kRowSumTolerance) {
        throw ValidationError("layer " + std::to_string(l) + " row " + std::to_string(j) + " sums to " +
                              std::to_string(s) + ", deviation exceeds 1e-4");
      }
      // Rows already at rounding distance from 1 are kept as-is so a saved stack reloads bit-identically.
      if (std::abs(s - 1.0) > kRenormalizeThreshold) {
        for (std::size_t i = 0; i < stack.n; ++i) a(j, i) /= s;
      }
    }
  }
  return stack;
}

// {"version": 1, "n", "L", "tokens": [str]|null, "head_reduction", "layers": [L][n][n]}

inline AttentionStack attention_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("version").get<int>() != 1) throw ValidationError("unsupported interchange version");
    AttentionStack stack;
    const auto n_raw = doc.at("n").get<long long>();
    const auto l_raw = doc.at("L").get<long long>();
    if (n_raw < 1) throw ValidationError("n must be >= 1");
    if (l_raw < 1) throw ValidationError("L must be >= 1");
    stack.n = static_cast<std::size_t>(n_raw);
    const auto num_layers = static_cast<std::size_t>(l_raw);
    if (!doc.at("tokens").is_null()) stack.tokens = doc.at("tokens").get<std::vector<std::string>>();
    stack.head_reduction = doc.at("head_reduction").get<std::string>();
    const auto& layers = doc.at("layers");
    if (!layers.is_array() || layers.size() != num_layers) {
      throw ValidationError("layers must be an array of L = " + std::to_string(num_layers) + " matrices");
    }
    for (std::size_t l = 0; l < num_layers; ++l) {
      const auto& rows = layers[l];
      if (!rows.is_array() || rows.size() != stack.n) {
        throw ValidationError("layer " + std::to_string(l) + " must have n = " + std::to_string(stack.n) + " rows");
      }
      SquareMatrix m(stack.n);
      for (std::size_t j = 0; j < stack.n; ++j) {
        if (!rows[j].is_array() || rows[j].size() != stack.n) {
          throw ValidationError("layer " + std::to_string(l) + " row " + std::to_string(j) + " is ragged");
        }
        for (std::size_t i = 0; i < stack.n; ++i) m(j, i) = rows[j][i].get<double>();
      }
      stack.layers.push_back(std::move(m));
    }
    return validate_attention(std::move(stack));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed attention document: ") + e.what());
  }
}

inline nlohmann::json attention_to_json(const AttentionStack& stack) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& a : stack.layers) layers.push_back(a.rows());
  nlohmann::json doc;
  doc["version"] = 1;
  doc["n"] = stack.n;
  doc["L"] = stack.layers.size();
  doc["tokens"] = stack.tokens.empty() ? nlohmann::json(nullptr) : nlohmann::json(stack.tokens);
  doc["head_reduction"] = stack.head_reduction;
  doc["layers"] = std::move(layers);
  return doc;
}

inline AttentionStack load_attention(const std::string& path) { return attention_from_json(read_json_file(path)); }

}  // namespace gtattr
