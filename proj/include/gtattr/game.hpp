#pragma once

// TU-games (N, v): payoff oracles over bit-set coalitions, the standard
// synthetic game families, and player grouping.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gtattr/coalition.hpp"
#include "gtattr/error.hpp"
#include "json.hpp"

namespace gtattr {

enum class PayoffKind {
  kTabulated,
  kAdditive,
  kUnanimity,
  kMajority,
  kSum,
  kGrouped,
  kFlowRestricted,
  kFlowRecomputed,
  kAttentionSum,
  kCustom,
};

inline std::string_view to_string(PayoffKind kind) {
  switch (kind) {
    case PayoffKind::kTabulated: return "tabulated";
    case PayoffKind::kAdditive: return "additive";
    case PayoffKind::kUnanimity: return "unanimity";
    case PayoffKind::kMajority: return "majority";
    case PayoffKind::kSum: return "sum";
    case PayoffKind::kGrouped: return "grouped";
    case PayoffKind::kFlowRestricted: return "flow-restricted";
    case PayoffKind::kFlowRecomputed: return "flow-recomputed";
    case PayoffKind::kAttentionSum: return "attention-sum";
    case PayoffKind::kCustom: return "custom";
  }
  return "custom";
}

/// A characteristic function v : 2^N -> R with v(empty) = 0.
///
/// The raw function is shifted by its value at the empty coalition, so any
/// callable can be wrapped and the result still satisfies v(empty) = 0
/// exactly. The wrapped callable must be pure: it may be invoked from several
/// threads at once and must return bit-identical values for equal inputs.
class PayoffOracle {
 public:
  using RawFn = std::function<double(Coalition)>;

  PayoffOracle() : PayoffOracle([](Coalition) { return 0.0; }, PayoffKind::kCustom) {}

  PayoffOracle(RawFn raw, PayoffKind kind)
      : raw_(std::make_shared<const RawFn>(std::move(raw))), kind_(kind) {
    baseline_ = (*raw_)(Coalition{});
    if (!std::isfinite(baseline_)) throw NonFiniteError("payoff of the empty coalition is not finite");
  }

  double operator()(Coalition s) const { return evaluate(s); }

  double evaluate(Coalition s) const {
    if (s.empty()) return 0.0;
    return (*raw_)(s) - baseline_;
  }

  /// Same as evaluate() but throws NonFiniteError on NaN/inf.
  double evaluate_checked(Coalition s) const {
    const double v = evaluate(s);
    if (!std::isfinite(v)) {
      throw NonFiniteError("payoff oracle returned a non-finite value for coalition bits " +
                           std::to_string(s.bits()));
    }
    return v;
  }

  PayoffKind kind() const { return kind_; }
  double baseline() const { return baseline_; }

 private:
  std::shared_ptr<const RawFn> raw_;
  PayoffKind kind_;
  double baseline_ = 0.0;
};

/// A game (N, v).
struct Game {
  PlayerSet players;
  PayoffOracle payoff;

  std::size_t n() const { return players.size(); }
  double operator()(Coalition s) const { return payoff.evaluate(s); }
  double grand() const { return payoff.evaluate(players.all()); }
};

struct TableEntry {
  Coalition coalition;
  double value = 0.0;
};

/// Dense 2^n table. Missing coalitions are an error unless `zero_fill` is set.
inline Game make_tabulated_game(std::size_t n, const std::vector<TableEntry>& entries,
                                bool zero_fill = false) {
  if (n < 1 || n > kMaxExactPlayers) {
    throw GuardError("dense tabulated games support 1..20 players, got " + std::to_string(n));
  }
  const std::size_t size = std::size_t{1} << n;
  auto table = std::make_shared<std::vector<double>>(size, 0.0);
  std::vector<char> present(size, 0);
  present[0] = 1;  // v(empty) defaults to 0
  bool empty_given = false;
  for (const auto& e : entries) {
    if (e.coalition.span() > n) {
      throw ValidationError("coalition bits " + std::to_string(e.coalition.bits()) +
                            " reference a player >= n");
    }
    const auto idx = static_cast<std::size_t>(e.coalition.bits());
    const bool duplicate = idx == 0 ? empty_given : present[idx] != 0;
    if (duplicate) {
      throw ValidationError("duplicate coalition key with bits " + std::to_string(idx));
    }
    if (idx == 0) empty_given = true;
    present[idx] = 1;
    (*table)[idx] = e.value;
  }
  if (!zero_fill) {
    for (std::size_t idx = 1; idx < size; ++idx) {
      if (present[idx] == 0) {
        throw ValidationError("tabulated game is missing coalition bits " + std::to_string(idx) +
                              " (enable zero-fill to default missing entries to 0)");
      }
    }
  }
  return Game{PlayerSet(n),
              PayoffOracle([table](Coalition s) { return (*table)[static_cast<std::size_t>(s.bits())]; },
                           PayoffKind::kTabulated)};
}

/// v(S) = 1 if carriers is a subset of S, else 0.
inline Game make_unanimity_game(std::size_t n, Coalition carriers) {
  if (carriers.empty()) throw ValidationError("unanimity game needs at least one carrier");
  if (carriers.span() > n) throw ValidationError("unanimity carriers reference a player >= n");
  return Game{PlayerSet(n), PayoffOracle([carriers](Coalition s) { return carriers.subset_of(s) ? 1.0 : 0.0; },
                                         PayoffKind::kUnanimity)};
}

/// v(S) = sum of weights over S.
inline Game make_additive_game(std::vector<double> weights) {
  const std::size_t n = weights.size();
  PlayerSet players(n);
  auto w = std::make_shared<const std::vector<double>>(std::move(weights));
  return Game{std::move(players), PayoffOracle(
                                      [w](Coalition s) {
                                        double total = 0.0;
                                        for (auto b = s.bits(); b != 0; b &= b - 1) {
                                          total += (*w)[static_cast<std::size_t>(std::countr_zero(b))];
                                        }
                                        return total;
                                      },
                                      PayoffKind::kAdditive)};
}

/// v(S) = 1 if |S| >= quota, else 0.
inline Game make_majority_game(std::size_t n, std::size_t quota) {
  if (quota < 1 || quota > n) throw ValidationError("majority quota must be in [1, n]");
  return Game{PlayerSet(n), PayoffOracle([quota](Coalition s) { return s.size() >= quota ? 1.0 : 0.0; },
                                         PayoffKind::kMajority)};
}

/// Pointwise sum (v + w) of two games on the same player set.
inline Game sum_games(const Game& v, const Game& w) {
  if (v.n() != w.n()) throw ValidationError("cannot add games with different player counts");
  auto a = v.payoff;
  auto b = w.payoff;
  return Game{v.players, PayoffOracle([a, b](Coalition s) { return a(s) + b(s); }, PayoffKind::kSum)};
}

/// Redefines players as groups of base units. A coalition of groups is
/// evaluated on the union of its groups' members.
inline Game group_players(const Game& base, std::vector<std::vector<std::size_t>> grouping,
                          std::vector<std::string> labels = {}) {
  const auto units = PlayerSet::validate_partition(grouping);
  if (units != base.n()) {
    throw ValidationError("grouping covers " + std::to_string(units) + " units but the base game has " +
                          std::to_string(base.n()));
  }
  std::vector<Coalition> masks;
  masks.reserve(grouping.size());
  for (const auto& g : grouping) masks.push_back(Coalition::from_members(g));
  auto oracle = base.payoff;
  const auto count = grouping.size();
  PlayerSet players(count, std::move(labels), std::move(grouping));
  return Game{std::move(players), PayoffOracle(
                                      [oracle, masks = std::move(masks)](Coalition s) {
                                        Coalition units_in;
                                        for (auto b = s.bits(); b != 0; b &= b - 1) {
                                          units_in = units_in | masks[static_cast<std::size_t>(std::countr_zero(b))];
                                        }
                                        return oracle(units_in);
                                      },
                                      PayoffKind::kGrouped)};
}

// ---------------------------------------------------------------------------
// JSON: {"n": int, "values": [{"coalition": [indices], "v": real}, ...]}

inline Game tabulated_game_from_json(const nlohmann::json& doc, bool zero_fill = false) {
  try {
    const auto n = doc.at("n").get<std::size_t>();
    std::vector<TableEntry> entries;
    for (const auto& row : doc.at("values")) {
      Coalition c;
      for (const auto& idx : row.at("coalition")) {
        const auto i = idx.get<std::size_t>();
        if (i >= n) throw ValidationError("coalition index " + std::to_string(i) + " out of range");
        if (c.contains(i)) throw ValidationError("coalition lists index " + std::to_string(i) + " twice");
        c = c.with(i);
      }
      entries.push_back({c, row.at("v").get<double>()});
    }
    return make_tabulated_game(n, entries, zero_fill);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed game document: ") + e.what());
  }
}

inline nlohmann::json game_to_json(const Game& game) {
  const auto n = game.n();
  if (n > kMaxExactPlayers) throw GuardError("cannot tabulate a game with more than 20 players");
  nlohmann::json values = nlohmann::json::array();
  const std::uint64_t size = std::uint64_t{1} << n;
  for (std::uint64_t bits = 0; bits < size; ++bits) {
    const Coalition s(bits);
    const auto members = s.members();
    values.push_back({{"coalition", members}, {"v", game(s)}});
  }
  return {{"n", n}, {"values", std::move(values)}};
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

inline Game load_tabulated_game(const std::string& path, bool zero_fill = false) {
  return tabulated_game_from_json(read_json_file(path), zero_fill);
}

}  // namespace gtattr
