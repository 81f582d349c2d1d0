#pragma once

// Exact and sampled Shapley values, leave-one-out values, and checks of the
// null-player / symmetry / additivity / efficiency axioms.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <algorithm>
#include <bit>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "gtattr/coalition.hpp"
#include "gtattr/error.hpp"
#include "gtattr/game.hpp"
#include "gtattr/parallel.hpp"
#include "gtattr/report.hpp"

namespace gtattr {

// Exhaustive axiom checks enumerate 2^(n-1) coalitions per player.
inline constexpr std::size_t kMaxAxiomPlayers = 12;

inline constexpr double kExactTolerance = 1e-9;
inline constexpr double kMarginalTolerance = 1e-12;

namespace detail {

inline void require_exact_size(std::size_t n, std::size_t cap, const char* what) {
  if (n > cap) {
    throw GuardError(std::string(what) + " enumerates all coalitions and is limited to " + std::to_string(cap) +
                     " players (got " + std::to_string(n) + "); use Monte Carlo sampling instead");
  }
}

// Payoff of every coalition, indexed by bit pattern.
inline std::vector<double> tabulate(const Game& game, std::size_t workers) {
  const std::size_t size = std::size_t{1} << game.n();
  std::vector<double> table(size);
  for_each_range(split_range(size, workers), [&](std::size_t, IndexRange r) {
    for (std::size_t bits = r.begin; bits < r.end; ++bits) {
      table[bits] = game.payoff.evaluate_checked(Coalition(bits));
    }
  });
  return table;
}

// |S|!(n-1-|S|)!/n! for |S| = 0..n-1, i.e. 1 / (n * C(n-1, |S|)).
inline std::vector<double> shapley_weights(std::size_t n) {
  std::vector<double> w(n);
  double binom = 1.0;  // C(n-1, k)
  for (std::size_t k = 0; k < n; ++k) {
    w[k] = 1.0 / (static_cast<double>(n) * binom);
    binom = binom * static_cast<double>(n - 1 - k) / static_cast<double>(k + 1);
  }
  return w;
}

}  // namespace detail

/// Sum of coalition-weighted marginals for one player over a full payoff table,
/// accumulated in ascending bit-pattern order.
inline double shapley_from_table(const std::vector<double>& table, std::size_t player,
                                 const std::vector<double>& weights) {
  const std::uint64_t bit = std::uint64_t{1} << player;
  double sum = 0.0;
  for (std::uint64_t s = 0; s < table.size(); ++s) {
    if (s & bit) continue;
    sum += weights[static_cast<std::size_t>(std::popcount(s))] * (table[s | bit] - table[s]);
  }
  return sum;
}

struct ExactOptions {
  std::size_t workers = 1;
};

/// Exact Shapley values via the coalition-sum form. One oracle call per
/// coalition; limited to 20 players.
inline AttributionReport exact_shapley(const Game& game, ExactOptions opts = {}) {
  const std::size_t n = game.n();
  detail::require_exact_size(n, kMaxExactPlayers, "exact Shapley");
  const auto table = detail::tabulate(game, opts.workers);
  const auto weights = detail::shapley_weights(n);

  AttributionReport report;
  report.method = Method::kShapleyExact;
  report.values.assign(n, 0.0);
  // Each player's sum is independent, so the split only changes who computes it.
  detail::for_each_range(detail::split_range(n, opts.workers), [&](std::size_t, detail::IndexRange r) {
    for (std::size_t i = r.begin; i < r.end; ++i) report.values[i] = shapley_from_table(table, i, weights);
  });
  report.v_grand = table.back();
  report.labels = game.players.labels();
  report.metadata["payoff"] = to_string(game.payoff.kind());
  return report;
}

/// Monte Carlo settings: m sampled permutations from `seed`.
struct EstimatorConfig {
  std::uint64_t m = 1000;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  // Test mode: permutation k is the (k mod n!)-th permutation in
  // lexicographic order instead of a random draw.
  bool enumerate_permutations = false;
};

/// The k-th permutation of {0..n-1} in lexicographic order (k < n!).
inline std::vector<std::size_t> unrank_permutation(std::size_t n, std::uint64_t k) {
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  std::vector<std::uint64_t> fact(n + 1, 1);
  for (std::size_t i = 1; i <= n; ++i) fact[i] = fact[i - 1] * i;
  std::vector<std::size_t> out;
  out.reserve(n);
  for (std::size_t i = n; i > 0; --i) {
    const auto idx = static_cast<std::size_t>(k / fact[i - 1]);
    k %= fact[i - 1];
    out.push_back(pool[idx]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(idx));
  }
  return out;
}

inline std::uint64_t factorial(std::size_t n) {
  if (n > 20) throw GuardError("n! overflows 64 bits for n > 20");
  std::uint64_t f = 1;
  for (std::size_t i = 2; i <= n; ++i) f *= i;
  return f;
}

/// Uniform random permutation for sample index k. Each index owns its own
/// generator stream keyed by (seed, k), so the draw does not depend on which
/// worker handles it.
inline std::vector<std::size_t> sample_permutation(std::size_t n, std::uint64_t seed, std::uint64_t k) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  return order;
}

namespace detail {

// Running mean / sum of squared deviations (Welford), mergeable (Chan et al.).
struct RunningMoments {
  std::uint64_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++count;
    const double delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (x - mean);
  }

  void merge(const RunningMoments& o) {
    if (o.count == 0) return;
    if (count == 0) {
      *this = o;
      return;
    }
    const double total = static_cast<double>(count + o.count);
    const double delta = o.mean - mean;
    mean += delta * static_cast<double>(o.count) / total;
    m2 += o.m2 + delta * delta * static_cast<double>(count) * static_cast<double>(o.count) / total;
    count += o.count;
  }
};

}  // namespace detail

/// Monte Carlo Shapley estimate from m uniformly sampled permutations, with
/// the sample standard error of each player's marginals.
inline AttributionReport monte_carlo_shapley(const Game& game, const EstimatorConfig& cfg) {
  if (cfg.m == 0) throw ValidationError("Monte Carlo Shapley needs at least one permutation (m >= 1)");
  const std::size_t n = game.n();
  const std::uint64_t n_fact = cfg.enumerate_permutations ? factorial(n) : 0;

  const auto ranges = detail::split_range(static_cast<std::size_t>(cfg.m), cfg.workers);
  std::vector<std::vector<detail::RunningMoments>> partial(ranges.size(),
                                                           std::vector<detail::RunningMoments>(n));
  detail::for_each_range(ranges, [&](std::size_t w, detail::IndexRange r) {
    auto& moments = partial[w];
    for (std::size_t k = r.begin; k < r.end; ++k) {
      const auto order = cfg.enumerate_permutations ? unrank_permutation(n, k % n_fact)
                                                    : sample_permutation(n, cfg.seed, k);
      Coalition prefix;
      double prev = 0.0;
      for (auto player : order) {
        prefix = prefix.with(player);
        const double cur = game.payoff.evaluate_checked(prefix);
        moments[player].add(cur - prev);
        prev = cur;
      }
    }
  });

  std::vector<detail::RunningMoments> total(n);
  for (const auto& p : partial) {
    for (std::size_t i = 0; i < n; ++i) total[i].merge(p[i]);
  }

  AttributionReport report;
  report.method = Method::kShapleyMonteCarlo;
  report.values.resize(n);
  std::vector<double> se(n, 0.0);
  const double m = static_cast<double>(cfg.m);
  for (std::size_t i = 0; i < n; ++i) {
    report.values[i] = total[i].mean;
    if (cfg.m > 1) se[i] = std::sqrt(total[i].m2 / (m - 1.0)) / std::sqrt(m);
  }
  report.std_error = std::move(se);
  report.v_grand = game.payoff.evaluate_checked(game.players.all());
  report.seed = cfg.seed;
  report.m = cfg.m;
  report.labels = game.players.labels();
  report.metadata["payoff"] = to_string(game.payoff.kind());
  report.metadata["stderr_note"] =
      cfg.m > 1 ? "sample standard deviation of per-permutation marginals divided by sqrt(m)"
                : "undefined for m = 1; reported as 0";
  if (cfg.enumerate_permutations) report.metadata["permutations"] = "lexicographic enumeration";
  return report;
}

/// LOO_i = v(N) - v(N \ {i}); n + 1 oracle calls.
inline AttributionReport leave_one_out(const Game& game) {
  const std::size_t n = game.n();
  const Coalition all = game.players.all();
  AttributionReport report;
  report.method = Method::kLeaveOneOut;
  report.v_grand = game.payoff.evaluate_checked(all);
  report.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    report.values[i] = report.v_grand - game.payoff.evaluate_checked(all.without(i));
  }
  report.labels = game.players.labels();
  report.metadata["payoff"] = to_string(game.payoff.kind());
  return report;
}

// ---------------------------------------------------------------------------
// Axiom checks. Each verdict pairs the axiom's premise with its conclusion; the
// axiom is respected when premise implies conclusion.

struct AxiomVerdict {
  bool premise = false;
  bool conclusion = false;
  bool satisfied() const { return !premise || conclusion; }
};

/// Is i a null player, and is its reported value zero?
inline AxiomVerdict check_null_player(const Game& game, std::size_t i, const AttributionReport& report) {
  const std::size_t n = game.n();
  detail::require_exact_size(n, kMaxAxiomPlayers, "the null-player check");
  if (i >= n || report.n() != n) throw ValidationError("player index or report size does not match the game");
  AxiomVerdict v;
  v.premise = true;
  const std::uint64_t size = std::uint64_t{1} << n;
  for (std::uint64_t s = 0; s < size && v.premise; ++s) {
    const Coalition c(s);
    if (c.contains(i)) continue;
    if (std::abs(game(c.with(i)) - game(c)) > kMarginalTolerance) v.premise = false;
  }
  v.conclusion = std::abs(report.values[i]) <= kExactTolerance;
  return v;
}

/// Do i and j make the same contribution to every coalition excluding both,
/// and are their reported values equal?
inline AxiomVerdict check_symmetry(const Game& game, std::size_t i, std::size_t j,
                                   const AttributionReport& report) {
  const std::size_t n = game.n();
  detail::require_exact_size(n, kMaxAxiomPlayers, "the symmetry check");
  if (i >= n || j >= n || report.n() != n) {
    throw ValidationError("player index or report size does not match the game");
  }
  AxiomVerdict v;
  v.premise = true;
  const std::uint64_t size = std::uint64_t{1} << n;
  for (std::uint64_t s = 0; s < size && v.premise; ++s) {
    const Coalition c(s);
    if (c.contains(i) || c.contains(j)) continue;
    if (std::abs(game(c.with(i)) - game(c.with(j))) > kMarginalTolerance) v.premise = false;
  }
  v.conclusion = std::abs(report.values[i] - report.values[j]) <= kExactTolerance;
  return v;
}

struct AdditivityVerdict {
  bool holds = false;
  double max_abs_diff = 0.0;
};

/// phi(v + w) == phi(v) + phi(w), per player.
inline AdditivityVerdict check_additivity(const Game& v, const Game& w) {
  if (v.n() != w.n()) throw ValidationError("additivity check needs games over the same player set");
  detail::require_exact_size(v.n(), kMaxAxiomPlayers, "the additivity check");
  const auto pv = exact_shapley(v);
  const auto pw = exact_shapley(w);
  const auto pvw = exact_shapley(sum_games(v, w));
  AdditivityVerdict out;
  for (std::size_t i = 0; i < v.n(); ++i) {
    out.max_abs_diff = std::max(out.max_abs_diff, std::abs(pvw.values[i] - (pv.values[i] + pw.values[i])));
  }
  out.holds = out.max_abs_diff <= kExactTolerance;
  return out;
}

/// |sum(values) - v(N)| <= 1e-9 * max(1, |v(N)|).
inline bool check_efficiency(const AttributionReport& report, double tolerance = kExactTolerance) {
  double sum = 0.0;
  for (double x : report.values) sum += x;
  return std::abs(sum - report.v_grand) <= tolerance * std::max(1.0, std::abs(report.v_grand));
}

}  // namespace gtattr
