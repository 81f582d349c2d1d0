#pragma once

// Attention flow: the layered attention graph as a flow network, maximum flow
// over it, per-player outflows, and attention rollout.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "gtattr/attention.hpp"
#include "gtattr/coalition.hpp"
#include "gtattr/error.hpp"
#include "gtattr/game.hpp"
#include "gtattr/report.hpp"

namespace gtattr {

/// Residual capacities at or below this are treated as zero.
inline constexpr double kFlowEpsilon = 1e-12;

/// Which last-layer positions drain into the sink.
struct SinkMode {
  enum class Kind { kFull, kTarget };
  Kind kind = Kind::kFull;
  std::size_t target = 0;

  static SinkMode full() { return {}; }
  static SinkMode target_at(std::size_t k) { return {Kind::kTarget, k}; }

  /// "full" or "target:k"
  static SinkMode parse(const std::string& s) {
    if (s == "full") return full();
    constexpr std::string_view prefix = "target:";
    if (s.rfind(prefix, 0) == 0 && s.size() > prefix.size()) {
      std::size_t k = 0;
      for (std::size_t i = prefix.size(); i < s.size(); ++i) {
        if (s[i] < '0' || s[i] > '9') throw ValidationError("bad sink mode '" + s + "'");
        k = k * 10 + static_cast<std::size_t>(s[i] - '0');
      }
      return target_at(k);
    }
    throw ValidationError("sink mode must be 'full' or 'target:k', got '" + s + "'");
  }

  std::string str() const { return kind == Kind::kFull ? "full" : "target:" + std::to_string(target); }
};

struct FlowOptions {
  SinkMode sink = SinkMode::full();
  bool residual = false;
  double residual_weight = 0.5;
};

/// A token position: `layer` counts layer boundaries from the input (0).
struct TokenRef {
  std::size_t layer = 0;
  std::size_t token = 0;
};

/// Players of an attention-flow game. Each player is a group of positions;
/// only input-layer positions are accepted.
struct FlowPlayers {
  std::vector<std::vector<TokenRef>> groups;

  /// One player per input token.
  static FlowPlayers input_tokens(std::size_t n) {
    FlowPlayers p;
    for (std::size_t i = 0; i < n; ++i) p.groups.push_back({TokenRef{0, i}});
    return p;
  }

  /// Players as groups of input-token indices.
  static FlowPlayers from_groups(const std::vector<std::vector<std::size_t>>& token_groups) {
    FlowPlayers p;
    for (const auto& g : token_groups) {
      std::vector<TokenRef> refs;
      for (auto t : g) refs.push_back(TokenRef{0, t});
      p.groups.push_back(std::move(refs));
    }
    return p;
  }

  std::size_t size() const { return groups.size(); }
};

/// Per-layer capacity matrices, optionally mixed with the identity:
/// w * I + (1 - w) * A, rows renormalized.
inline std::vector<SquareMatrix> layer_capacities(const AttentionStack& stack, bool residual, double weight) {
  if (residual && !(weight > 0.0 && weight < 1.0)) {
    throw ValidationError("residual weight must lie in (0, 1)");
  }
  std::vector<SquareMatrix> out;
  out.reserve(stack.layers.size());
  for (const auto& a : stack.layers) {
    if (!residual) {
      out.push_back(a);
      continue;
    }
    SquareMatrix m(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) {
      for (std::size_t i = 0; i < a.size(); ++i) m(j, i) = (1.0 - weight) * a(j, i) + (i == j ? weight : 0.0);
    }
    m.normalize_rows();
    out.push_back(std::move(m));
  }
  return out;
}

struct FlowArc {
  std::size_t tail = 0;
  std::size_t head = 0;
  double capacity = 0.0;
};

/// Layered DAG: source -> player tokens at boundary 0 -> ... -> boundary L
/// -> sink. Node (l, i) is token i after l attention layers.
///
/// Arc order is fixed: source arcs by player then token, attention arcs by
/// (layer, key token, query token), then sink arcs by token.
struct FlowNetwork {
  std::size_t n = 0;
  std::size_t num_layers = 0;
  std::vector<FlowArc> arcs;
  std::vector<std::vector<std::size_t>> player_arcs;  // source-arc indices per player
  std::vector<std::string> player_labels;
  SinkMode sink_mode;

  static constexpr std::size_t source() { return 0; }
  static constexpr std::size_t sink() { return 1; }
  std::size_t node(std::size_t layer, std::size_t token) const { return 2 + layer * n + token; }
  std::size_t num_nodes() const { return 2 + (num_layers + 1) * n; }
  std::size_t num_players() const { return player_arcs.size(); }
};

inline FlowNetwork build_network(const AttentionStack& stack, const FlowPlayers& players,
                                 const FlowOptions& options = {}) {
  const std::size_t n = stack.n;
  if (stack.layers.empty()) throw ValidationError("attention stack has no layers");
  if (options.sink.kind == SinkMode::Kind::kTarget && options.sink.target >= n) {
    throw ValidationError("sink target " + std::to_string(options.sink.target) + " is out of range for n = " +
                          std::to_string(n));
  }
  if (players.groups.empty()) throw ValidationError("at least one player is required");
  if (players.size() > kMaxPlayers) throw ValidationError("at most 63 players are supported");

  FlowNetwork net;
  net.n = n;
  net.num_layers = stack.layers.size();
  net.sink_mode = options.sink;
  const double unbounded = static_cast<double>(n);

  std::vector<char> used(n, 0);
  for (const auto& group : players.groups) {
    if (group.empty()) throw ValidationError("player groups must be non-empty");
    std::vector<std::size_t> arc_ids;
    std::string label;
    for (const auto& ref : group) {
      if (ref.layer != 0) {
        throw ValidationError("players must be input-layer tokens; position (" + std::to_string(ref.layer) + ", " +
                              std::to_string(ref.token) + ") is at an internal layer");
      }
      if (ref.token >= n) throw ValidationError("player token " + std::to_string(ref.token) + " is out of range");
      if (used[ref.token]++ != 0) {
        throw ValidationError("token " + std::to_string(ref.token) + " belongs to more than one player");
      }
      arc_ids.push_back(net.arcs.size());
      net.arcs.push_back({FlowNetwork::source(), net.node(0, ref.token), unbounded});
      label += (label.empty() ? "" : "+") + stack.token(ref.token);
    }
    net.player_arcs.push_back(std::move(arc_ids));
    net.player_labels.push_back(std::move(label));
  }

  const auto caps = layer_capacities(stack, options.residual, options.residual_weight);
  for (std::size_t l = 0; l < caps.size(); ++l) {
    for (std::size_t key = 0; key < n; ++key) {
      for (std::size_t query = 0; query < n; ++query) {
        net.arcs.push_back({net.node(l, key), net.node(l + 1, query), caps[l](query, key)});
      }
    }
  }

  for (std::size_t t = 0; t < n; ++t) {
    if (options.sink.kind == SinkMode::Kind::kFull || options.sink.target == t) {
      net.arcs.push_back({net.node(net.num_layers, t), FlowNetwork::sink(), unbounded});
    }
  }
  return net;
}

struct FlowResult {
  std::vector<double> flow;     // per arc
  double total = 0.0;           // |f|
  std::vector<double> outflow;  // per player
  double cut_capacity = 0.0;    // capacity of the residual-reachability cut
  std::vector<char> source_side;
};

namespace detail {

// Dinic's algorithm on a residual graph with paired forward/backward edges.
class Dinic {
 public:
  explicit Dinic(const FlowNetwork& net)
      : to_(2 * net.arcs.size()), residual_(2 * net.arcs.size()), adj_(net.num_nodes()) {
    for (std::size_t e = 0; e < net.arcs.size(); ++e) {
      const auto& a = net.arcs[e];
      if (!(a.capacity >= 0.0) || !std::isfinite(a.capacity)) {
        throw ValidationError("arc capacities must be finite and non-negative");
      }
      to_[2 * e] = a.head;
      to_[2 * e + 1] = a.tail;
      residual_[2 * e] = a.capacity;
      residual_[2 * e + 1] = 0.0;
      adj_[a.tail].push_back(2 * e);
      adj_[a.head].push_back(2 * e + 1);
    }
  }

  void run(std::size_t s, std::size_t t) {
    while (build_levels(s, t)) {
      next_.assign(adj_.size(), 0);
      while (augment(s, t, std::numeric_limits<double>::infinity()) > 0.0) {
      }
    }
  }

  double flow_on(std::size_t arc) const { return residual_[2 * arc + 1]; }

  std::vector<char> reachable(std::size_t s) const {
    std::vector<char> seen(adj_.size(), 0);
    std::queue<std::size_t> q;
    seen[s] = 1;
    q.push(s);
    while (!q.empty()) {
      const auto u = q.front();
      q.pop();
      for (auto e : adj_[u]) {
        if (residual_[e] > kFlowEpsilon && !seen[to_[e]]) {
          seen[to_[e]] = 1;
          q.push(to_[e]);
        }
      }
    }
    return seen;
  }

 private:
  bool build_levels(std::size_t s, std::size_t t) {
    level_.assign(adj_.size(), -1);
    std::queue<std::size_t> q;
    level_[s] = 0;
    q.push(s);
    while (!q.empty()) {
      const auto u = q.front();
      q.pop();
      for (auto e : adj_[u]) {
        if (residual_[e] > kFlowEpsilon && level_[to_[e]] < 0) {
          level_[to_[e]] = level_[u] + 1;
          q.push(to_[e]);
        }
      }
    }
    return level_[t] >= 0;
  }

  // Pushes one augmenting path in the level graph; returns the amount pushed.
  double augment(std::size_t u, std::size_t t, double limit) {
    if (u == t) return limit;
    for (auto& i = next_[u]; i < adj_[u].size(); ++i) {
      const auto e = adj_[u][i];
      const auto v = to_[e];
      if (residual_[e] <= kFlowEpsilon || level_[v] != level_[u] + 1) continue;
      const double pushed = augment(v, t, std::min(limit, residual_[e]));
      if (pushed > 0.0) {
        residual_[e] -= pushed;
        residual_[e ^ 1] += pushed;
        return pushed;
      }
    }
    return 0.0;
  }

  std::vector<std::size_t> to_;
  std::vector<double> residual_;
  std::vector<std::vector<std::size_t>> adj_;
  std::vector<int> level_;
  std::vector<std::size_t> next_;
};

}  // namespace detail

/// Maximum source-sink flow. Deterministic for a fixed network. The returned
/// flow is certified by the residual-reachability cut, whose capacity must
/// match the flow value.
inline FlowResult max_flow(const FlowNetwork& net) {
  detail::Dinic solver(net);
  solver.run(FlowNetwork::source(), FlowNetwork::sink());

  FlowResult result;
  result.flow.resize(net.arcs.size());
  for (std::size_t e = 0; e < net.arcs.size(); ++e) result.flow[e] = solver.flow_on(e);

  result.outflow.assign(net.num_players(), 0.0);
  for (std::size_t p = 0; p < net.num_players(); ++p) {
    for (auto e : net.player_arcs[p]) result.outflow[p] += result.flow[e];
  }
  for (double f : result.outflow) result.total += f;

  result.source_side = solver.reachable(FlowNetwork::source());
  if (result.source_side[FlowNetwork::sink()]) {
    throw std::logic_error("max_flow: augmenting path left in the residual graph");
  }
  for (const auto& a : net.arcs) {
    if (result.source_side[a.tail] && !result.source_side[a.head]) result.cut_capacity += a.capacity;
  }
  if (std::abs(result.cut_capacity - result.total) > 1e-9 * std::max(1.0, result.total)) {
    throw std::logic_error("max_flow: cut capacity " + format_double(result.cut_capacity) +
                           " does not match flow value " + format_double(result.total));
  }
  return result;
}

/// Per-player attention flow: each player's outflow under one maximum flow
/// of the full network. v_grand is the flow value.
inline AttributionReport attention_flow_values(const AttentionStack& stack, const FlowPlayers& players,
                                               const FlowOptions& options = {}) {
  const auto net = build_network(stack, players, options);
  const auto result = max_flow(net);
  AttributionReport report;
  report.method = Method::kAttentionFlow;
  report.values = result.outflow;
  report.v_grand = result.total;
  report.labels = net.player_labels;
  report.metadata["sink"] = options.sink.str();
  report.metadata["residual"] = options.residual;
  if (options.residual) report.metadata["residual_weight"] = options.residual_weight;
  report.metadata["head_reduction"] = stack.head_reduction;
  report.metadata["layers"] = stack.layers.size();
  return report;
}

struct RolloutResult {
  SquareMatrix matrix;  // (output position j, input token i)
};

/// Product A_L * ... * A_1 of the (optionally residual-mixed) layer matrices.
inline RolloutResult attention_rollout(const AttentionStack& stack, bool residual = false,
                                       double residual_weight = 0.5) {
  const auto caps = layer_capacities(stack, residual, residual_weight);
  RolloutResult r{caps.front()};
  for (std::size_t l = 1; l < caps.size(); ++l) r.matrix = caps[l] * r.matrix;
  return r;
}

/// Rollout scores per player: column sums over all outputs for a full sink,
/// or the target row for target:k. Groups sum their members.
inline AttributionReport rollout_values(const AttentionStack& stack, const FlowPlayers& players,
                                        const FlowOptions& options = {}) {
  // Reuse network construction for validation of players and sink.
  const auto net = build_network(stack, players, options);
  const auto roll = attention_rollout(stack, options.residual, options.residual_weight);
  AttributionReport report;
  report.method = Method::kRollout;
  report.values.assign(players.size(), 0.0);
  for (std::size_t p = 0; p < players.size(); ++p) {
    for (const auto& ref : players.groups[p]) {
      report.values[p] += options.sink.kind == SinkMode::Kind::kFull ? roll.matrix.col_sum(ref.token)
                                                                     : roll.matrix(options.sink.target, ref.token);
    }
  }
  for (double x : report.values) report.v_grand += x;
  report.labels = net.player_labels;
  report.metadata["sink"] = options.sink.str();
  report.metadata["residual"] = options.residual;
  if (options.residual) report.metadata["residual_weight"] = options.residual_weight;
  report.metadata["matrix"] = roll.matrix.rows();
  return report;
}

/// Total attention each token receives in one layer (column sums).
inline AttributionReport raw_attention_values(const AttentionStack& stack, std::size_t layer = 0) {
  if (layer >= stack.layers.size()) throw ValidationError("layer index out of range");
  AttributionReport report;
  report.method = Method::kRawAttention;
  for (std::size_t i = 0; i < stack.n; ++i) report.values.push_back(stack.layers[layer].col_sum(i));
  for (double x : report.values) report.v_grand += x;
  report.labels = stack.tokens;
  report.metadata["layer"] = layer;
  return report;
}

/// v(S) = sum of members' outflows under the fixed full-network flow, i.e. the
/// value left after blocking the flow of every player outside S.
inline PayoffOracle restriction_payoff(const FlowResult& result) {
  auto outflow = std::make_shared<const std::vector<double>>(result.outflow);
  return PayoffOracle(
      [outflow](Coalition s) {
        double v = 0.0;
        for (auto b = s.bits(); b != 0; b &= b - 1) v += (*outflow)[static_cast<std::size_t>(std::countr_zero(b))];
        return v;
      },
      PayoffKind::kFlowRestricted);
}

inline Game restriction_game(const FlowNetwork& net, const FlowResult& result) {
  return Game{PlayerSet(net.num_players(), net.player_labels), restriction_payoff(result)};
}

/// v(S) = max-flow value of the network with the source arcs of players
/// outside S removed. Memoized per coalition; safe to share across threads.
inline PayoffOracle recomputed_payoff(const FlowNetwork& net) {
  struct State {
    FlowNetwork net;
    std::mutex mu;
    std::map<std::uint64_t, double> memo;
  };
  auto state = std::make_shared<State>();
  state->net = net;
  return PayoffOracle(
      [state](Coalition s) {
        {
          std::lock_guard lock(state->mu);
          if (auto it = state->memo.find(s.bits()); it != state->memo.end()) return it->second;
        }
        FlowNetwork restricted = state->net;
        for (std::size_t p = 0; p < restricted.num_players(); ++p) {
          if (s.contains(p)) continue;
          for (auto e : restricted.player_arcs[p]) restricted.arcs[e].capacity = 0.0;
        }
        const double value = max_flow(restricted).total;
        std::lock_guard lock(state->mu);
        state->memo.emplace(s.bits(), value);
        return value;
      },
      PayoffKind::kFlowRecomputed);
}

inline Game recomputed_game(const FlowNetwork& net) {
  return Game{PlayerSet(net.num_players(), net.player_labels), recomputed_payoff(net)};
}

}  // namespace gtattr
