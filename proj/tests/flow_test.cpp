#include <random>

#include "gtest/gtest.h"
#include "oracles.hpp"

namespace gtattr {
namespace {

using testing::max_abs_diff;

AttentionStack stack_of(std::vector<std::vector<std::vector<double>>> layers) {
  AttentionStack s;
  s.n = layers.front().size();
  for (const auto& l : layers) s.layers.push_back(SquareMatrix::from_rows(l));
  return validate_attention(std::move(s));
}

const AttentionStack kTwoToken = stack_of({{{0.7, 0.3}, {0.4, 0.6}}});

TEST(BuildNetwork, FigureOneTopology) {
  std::mt19937_64 rng(1);
  const auto s = random_stack(3, 3, rng);
  const auto net = build_network(s, FlowPlayers::input_tokens(3));
  EXPECT_EQ(net.num_players(), 3u);
  EXPECT_EQ(net.num_nodes(), 2u + 4u * 3u);
  EXPECT_EQ(net.arcs.size(), 3u + 3u * 9u + 3u);
  for (std::size_t l = 0; l < 3; ++l) {
    std::size_t internal = 0;
    for (const auto& a : net.arcs) {
      if (a.tail >= net.node(l, 0) && a.tail < net.node(l + 1, 0) && a.head != FlowNetwork::sink()) ++internal;
    }
    EXPECT_EQ(internal, 9u);
  }
}

TEST(BuildNetwork, SingleLayerArcCountsAndCapacities) {
  const auto net = build_network(kTwoToken, FlowPlayers::input_tokens(2));
  ASSERT_EQ(net.arcs.size(), 2u + 4u + 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(net.arcs[i].tail, FlowNetwork::source());
    EXPECT_EQ(net.arcs[i].capacity, 2.0);
  }
  // (layer, key, query) order; capacity is attention query pays to key.
  EXPECT_EQ(net.arcs[2].capacity, 0.7);  // key 0 -> query 0
  EXPECT_EQ(net.arcs[3].capacity, 0.4);  // key 0 -> query 1
  EXPECT_EQ(net.arcs[4].capacity, 0.3);
  EXPECT_EQ(net.arcs[5].capacity, 0.6);
  EXPECT_EQ(net.arcs[6].head, FlowNetwork::sink());
}

TEST(BuildNetwork, ResidualOverIdentityKeepsIdentity) {
  const auto s = stack_of({{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}});
  const auto caps = layer_capacities(s, true, 0.5);
  EXPECT_EQ(caps[0], SquareMatrix::identity(3));
  const auto mixed = layer_capacities(kTwoToken, true, 0.5);
  EXPECT_NEAR(mixed[0](0, 0), 0.85, 1e-15);
  EXPECT_NEAR(mixed[0](1, 0), 0.2, 1e-15);
  EXPECT_THROW(layer_capacities(s, true, 1.0), ValidationError);
  EXPECT_THROW(layer_capacities(s, true, 0.0), ValidationError);
}

TEST(BuildNetwork, RejectsBadPlayersAndTargets) {
  FlowOptions target;
  target.sink = SinkMode::target_at(2);
  EXPECT_THROW(build_network(kTwoToken, FlowPlayers::input_tokens(2), target), ValidationError);
  FlowPlayers internal;
  internal.groups = {{TokenRef{1, 0}}};
  EXPECT_THROW(build_network(kTwoToken, internal), ValidationError);
  EXPECT_THROW(build_network(kTwoToken, FlowPlayers::from_groups({{0}, {0, 1}})), ValidationError);
  EXPECT_THROW(build_network(kTwoToken, FlowPlayers::from_groups({{5}})), ValidationError);
  EXPECT_THROW(build_network(kTwoToken, FlowPlayers{}), ValidationError);
}

TEST(SinkMode, Parse) {
  EXPECT_EQ(SinkMode::parse("full").kind, SinkMode::Kind::kFull);
  EXPECT_EQ(SinkMode::parse("target:3").target, 3u);
  EXPECT_EQ(SinkMode::parse("target:12").str(), "target:12");
  EXPECT_THROW(SinkMode::parse("target:"), ValidationError);
  EXPECT_THROW(SinkMode::parse("all"), ValidationError);
}

TEST(MaxFlow, TwoTokenSingleLayer) {
  const auto net = build_network(kTwoToken, FlowPlayers::input_tokens(2));
  const auto r = max_flow(net);
  EXPECT_NEAR(r.total, 2.0, 1e-12);
  EXPECT_NEAR(r.outflow[0], 1.1, 1e-12);
  EXPECT_NEAR(r.outflow[1], 0.9, 1e-12);
}

TEST(MaxFlow, IdentityStack) {
  const auto s = load_attention(testing::fixture("attention/identity_n3_l2.json"));
  const auto r = max_flow(build_network(s, FlowPlayers::input_tokens(3)));
  EXPECT_EQ(r.total, 3.0);
  EXPECT_EQ(r.outflow, (std::vector<double>{1, 1, 1}));
}

TEST(MaxFlow, ZeroColumnStarvesThatToken) {
  // Nobody attends to key 1, so token 1 cannot send flow anywhere. The target
  // query 1 still receives its full row from the other keys.
  const auto s = stack_of({{{0.5, 0.0, 0.5}, {0.3, 0.0, 0.7}, {0.2, 0.0, 0.8}}});
  FlowOptions target;
  target.sink = SinkMode::target_at(1);
  const auto r = max_flow(build_network(s, FlowPlayers::input_tokens(3), target));
  EXPECT_NEAR(r.total, 1.0, 1e-12);
  EXPECT_EQ(r.outflow[1], 0.0);
  const auto full = max_flow(build_network(s, FlowPlayers::input_tokens(3)));
  EXPECT_EQ(full.outflow[1], 0.0);
}

TEST(MaxFlow, TargetWithNoIncomingCapacity) {
  // Sink attached to query 2, which receives no attention capacity into it
  // when its row is concentrated on a key that is not a player.
  const auto s = stack_of({{{1, 0, 0}, {0, 1, 0}, {0, 1, 0}}});
  FlowOptions target;
  target.sink = SinkMode::target_at(2);
  const auto r = max_flow(build_network(s, FlowPlayers::from_groups({{0}, {2}}), target));
  EXPECT_EQ(r.total, 0.0);
  EXPECT_EQ(r.outflow, (std::vector<double>{0, 0}));
}

TEST(MaxFlow, SingleLayerOutflowIsColumnSum) {
  std::mt19937_64 rng(13);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 1 + t % 8;
    const auto s = random_stack(n, 1, rng);
    const auto r = max_flow(build_network(s, FlowPlayers::input_tokens(n)));
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(r.outflow[i], s.layers[0].col_sum(i), 1e-12);
  }
}

TEST(MaxFlow, InvariantsAndAgreementWithReferenceSolver) {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 200; ++t) {
    std::uniform_int_distribution<std::size_t> pick_n(1, 8), pick_l(1, 5);
    const auto n = pick_n(rng);
    const auto s = random_stack(n, pick_l(rng), rng);
    FlowOptions opts;
    if (t % 3 == 1) opts.sink = SinkMode::target_at(t % n);
    if (t % 4 == 2) opts.residual = true;
    const auto net = build_network(s, FlowPlayers::input_tokens(n), opts);
    const auto r = max_flow(net);
    const auto v = testing::flow_violations(net, r);
    EXPECT_LE(v.capacity, 1e-9);
    EXPECT_LE(v.conservation, 1e-9);
    EXPECT_LE(v.sink_vs_total, 1e-9);
    EXPECT_NEAR(r.cut_capacity, r.total, 1e-9);
    EXPECT_NEAR(r.total, testing::dense_max_flow(net), 1e-9);
  }
}

TEST(MaxFlow, DeterministicForFixedNetwork) {
  std::mt19937_64 rng(23);
  const auto s = random_stack(6, 4, rng);
  const auto net = build_network(s, FlowPlayers::input_tokens(6));
  const auto a = max_flow(net);
  const auto b = max_flow(net);
  EXPECT_EQ(a.flow, b.flow);
  EXPECT_EQ(a.outflow, b.outflow);
}

TEST(AttentionFlow, Values) {
  const auto r = attention_flow_values(kTwoToken, FlowPlayers::input_tokens(2));
  EXPECT_EQ(r.method, Method::kAttentionFlow);
  EXPECT_LT(max_abs_diff(r.values, {1.1, 0.9}), 1e-12);
  EXPECT_NEAR(r.v_grand, 2.0, 1e-12);
  const auto id = attention_flow_values(load_attention(testing::fixture("attention/identity_n3_l2.json")),
                                        FlowPlayers::input_tokens(3));
  EXPECT_EQ(id.values, (std::vector<double>{1, 1, 1}));
}

TEST(AttentionFlow, GroupedPlayersSumMemberOutflows) {
  const auto s = load_attention(testing::fixture("attention/three_tokens_three_layers.json"));
  const auto single = attention_flow_values(s, FlowPlayers::input_tokens(3));
  const auto grouped = attention_flow_values(s, FlowPlayers::from_groups({{0, 1}, {2}}));
  // Grouping changes only which source arcs are summed, so the flow is the same.
  EXPECT_NEAR(grouped.values[0], single.values[0] + single.values[1], 1e-12);
  EXPECT_NEAR(grouped.values[1], single.values[2], 1e-12);
  EXPECT_EQ(grouped.labels[0], "this+was");
}

TEST(Rollout, Examples) {
  std::mt19937_64 rng(2);
  const auto one = random_stack(4, 1, rng);
  EXPECT_EQ(attention_rollout(one).matrix, one.layers[0]);
  const auto id = load_attention(testing::fixture("attention/identity_n3_l2.json"));
  EXPECT_EQ(attention_rollout(id).matrix, SquareMatrix::identity(3));
  const auto two = stack_of({{{1, 0}, {0, 1}}, {{0.5, 0.5}, {0.5, 0.5}}});
  EXPECT_EQ(attention_rollout(two).matrix.rows(), (std::vector<std::vector<double>>{{0.5, 0.5}, {0.5, 0.5}}));
}

TEST(Rollout, OrderIsLastLayerTimesFirst) {
  const auto a1 = SquareMatrix::from_rows({{0.9, 0.1}, {0.2, 0.8}});
  const auto a2 = SquareMatrix::from_rows({{0.6, 0.4}, {0.3, 0.7}});
  AttentionStack s;
  s.n = 2;
  s.layers = {a1, a2};
  EXPECT_EQ(attention_rollout(s).matrix, a2 * a1);
}

TEST(Rollout, RowStochastic) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    const auto s = random_stack(1 + t % 7, 1 + t % 5, rng);
    for (bool residual : {false, true}) {
      const auto m = attention_rollout(s, residual).matrix;
      for (std::size_t j = 0; j < m.size(); ++j) {
        EXPECT_NEAR(m.row_sum(j), 1.0, 1e-9);
        for (std::size_t i = 0; i < m.size(); ++i) EXPECT_GE(m(j, i), 0.0);
      }
    }
  }
}

TEST(Rollout, ReportValues) {
  const auto r = rollout_values(kTwoToken, FlowPlayers::input_tokens(2));
  EXPECT_EQ(r.method, Method::kRollout);
  EXPECT_LT(max_abs_diff(r.values, {1.1, 0.9}), 1e-15);
  FlowOptions t;
  t.sink = SinkMode::target_at(1);
  EXPECT_EQ(rollout_values(kTwoToken, FlowPlayers::input_tokens(2), t).values, (std::vector<double>{0.4, 0.6}));
}

TEST(RawAttention, ColumnSums) {
  const auto r = raw_attention_values(kTwoToken);
  EXPECT_EQ(r.method, Method::kRawAttention);
  EXPECT_LT(max_abs_diff(r.values, {1.1, 0.9}), 1e-15);
  EXPECT_THROW(raw_attention_values(kTwoToken, 1), ValidationError);
}

TEST(RestrictionPayoff, Examples) {
  const auto net = build_network(kTwoToken, FlowPlayers::input_tokens(2));
  const auto flow = max_flow(net);
  const auto v = restriction_payoff(flow);
  EXPECT_EQ(v(Coalition{}), 0.0);
  EXPECT_NEAR(v(Coalition{0, 1}), flow.total, 1e-15);
  EXPECT_NEAR(v(Coalition{0}), 1.1, 1e-12);
  EXPECT_EQ(v.kind(), PayoffKind::kFlowRestricted);
}

TEST(RecomputedPayoff, Examples) {
  const auto s = load_attention(testing::fixture("attention/shared_bottleneck.json"));
  FlowOptions opts;
  opts.sink = SinkMode::target_at(0);
  const auto net = build_network(s, FlowPlayers::input_tokens(2), opts);
  const auto flow = max_flow(net);
  const auto rec = recomputed_payoff(net);
  const auto res = restriction_payoff(flow);
  EXPECT_EQ(rec(Coalition{}), 0.0);
  EXPECT_NEAR(rec(Coalition{0, 1}), flow.total, 1e-12);
  // Reference: per-coalition max flow by the dense solver.
  auto only = [&](std::size_t p) {
    auto copy = net;
    for (std::size_t q = 0; q < 2; ++q) {
      if (q != p) {
        for (auto e : copy.player_arcs[q]) copy.arcs[e].capacity = 0.0;
      }
    }
    return testing::dense_max_flow(copy);
  };
  EXPECT_NEAR(rec(Coalition{0}), only(0), 1e-12);
  EXPECT_NEAR(rec(Coalition{1}), only(1), 1e-12);
  EXPECT_NEAR(only(0), 1.0, 1e-12);
  EXPECT_NEAR(only(1), 0.6, 1e-12);
  EXPECT_NEAR(flow.total, 1.0, 1e-12);
  EXPECT_GE(rec(Coalition{0}), res(Coalition{0}));
  EXPECT_GE(rec(Coalition{1}), res(Coalition{1}));
}

TEST(RecomputedPayoff, MonotoneAndDominatesRestriction) {
  std::mt19937_64 rng(29);
  for (int t = 0; t < 30; ++t) {
    std::uniform_int_distribution<std::size_t> pick_n(2, 6), pick_l(1, 4);
    const auto n = pick_n(rng);
    const auto s = random_stack(n, pick_l(rng), rng);
    FlowOptions opts;
    if (t % 2) opts.sink = SinkMode::target_at(0);
    const auto net = build_network(s, FlowPlayers::input_tokens(n), opts);
    const auto flow = max_flow(net);
    const auto rec = recomputed_payoff(net);
    const auto res = restriction_payoff(flow);
    for (std::uint64_t bits = 0; bits < (std::uint64_t{1} << n); ++bits) {
      const Coalition c(bits);
      EXPECT_GE(rec(c), res(c) - 1e-9);
      for (std::size_t i = 0; i < n; ++i) EXPECT_GE(rec(c.with(i)), rec(c) - 1e-9);
    }
    EXPECT_NEAR(rec(Coalition::grand(n)), res(Coalition::grand(n)), 1e-9);
  }
}

}  // namespace
}  // namespace gtattr
