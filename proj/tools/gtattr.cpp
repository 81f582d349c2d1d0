// gtattr: attention-flow, rollout, Shapley and leave-one-out attributions from
// the command line.
//
// Exit status: 0 success, 1 invalid input, 2 size guard violated.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "CLI11.hpp"
#include "gtattr/gtattr.hpp"

namespace {

using gtattr::AttentionStack;
using gtattr::FlowOptions;
using gtattr::FlowPlayers;
using gtattr::Game;

constexpr int kExitValidation = 1;
constexpr int kExitGuard = 2;

struct RunConfig {
  std::string command;
  std::string input;
  std::string output;
  std::string format = "json";
  std::string payoff = "flow-restricted";
  std::string groups;
  std::string sink = "full";
  bool residual = false;
  double residual_weight = 0.5;
  bool exact = false;
  std::uint64_t samples = 0;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::size_t workers = 1;
  bool zero_fill = false;
  // verify
  std::string proposition;
  std::uint64_t trials = 100;
  std::size_t n_min = 2;
  std::size_t n_max = 6;
  std::size_t l_min = 1;
  std::size_t l_max = 4;
  // axioms
  std::string additive_with;
};

// "0,1;2;3,4" -> {{0,1},{2},{3,4}}
std::vector<std::vector<std::size_t>> parse_groups(const std::string& text) {
  std::vector<std::vector<std::size_t>> groups;
  std::stringstream outer(text);
  std::string group;
  while (std::getline(outer, group, ';')) {
    std::vector<std::size_t> members;
    std::stringstream inner(group);
    std::string item;
    while (std::getline(inner, item, ',')) {
      if (item.empty()) continue;
      try {
        std::size_t pos = 0;
        const auto v = std::stoull(item, &pos);
        if (pos != item.size()) throw std::invalid_argument(item);
        members.push_back(static_cast<std::size_t>(v));
      } catch (const std::exception&) {
        throw gtattr::ValidationError("bad player index '" + item + "' in --groups");
      }
    }
    if (members.empty()) throw gtattr::ValidationError("empty group in --groups '" + text + "'");
    groups.push_back(std::move(members));
  }
  return groups;
}

FlowOptions flow_options(const RunConfig& cfg) {
  FlowOptions opts;
  opts.sink = gtattr::SinkMode::parse(cfg.sink);
  opts.residual = cfg.residual;
  opts.residual_weight = cfg.residual_weight;
  return opts;
}

FlowPlayers flow_players(const RunConfig& cfg, const AttentionStack& stack) {
  return cfg.groups.empty() ? FlowPlayers::input_tokens(stack.n) : FlowPlayers::from_groups(parse_groups(cfg.groups));
}

// Writes to a temporary file in the destination directory, then renames.
void write_atomically(const std::string& path, const std::string& content) {
  const std::filesystem::path target(path);
  auto tmp = target;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw gtattr::ValidationError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw gtattr::ValidationError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw gtattr::ValidationError("cannot rename onto " + path + ": " + ec.message());
  }
}

void emit(const RunConfig& cfg, const std::string& content) {
  if (cfg.output.empty() || cfg.output == "-") {
    std::cout << content;
  } else {
    write_atomically(cfg.output, content);
  }
}

void emit_report(const RunConfig& cfg, gtattr::AttributionReport report) {
  report.metadata["command"] = cfg.command;
  report.metadata["generated_at"] = gtattr::utc_timestamp();
  if (!cfg.input.empty()) report.metadata["input"] = cfg.input;
  if (cfg.format == "csv") {
    std::ostringstream out;
    gtattr::write_plot_table(report, out);
    emit(cfg, out.str());
  } else {
    emit(cfg, gtattr::report_to_json(report).dump(2) + "\n");
  }
}

void emit_json(const RunConfig& cfg, const nlohmann::json& doc) {
  if (cfg.format != "json") throw gtattr::ValidationError(cfg.command + " only writes JSON");
  emit(cfg, doc.dump(2) + "\n");
}

void require_input(const RunConfig& cfg) {
  if (cfg.input.empty()) throw gtattr::ValidationError(cfg.command + " needs --input");
}

// The game a shapley/loo/axioms run operates on, selected by --payoff.
Game load_game(const RunConfig& cfg) {
  require_input(cfg);
  if (cfg.payoff == "tabulated") {
    auto game = gtattr::load_tabulated_game(cfg.input, cfg.zero_fill);
    if (!cfg.groups.empty()) game = gtattr::group_players(game, parse_groups(cfg.groups));
    return game;
  }
  const auto stack = gtattr::load_attention(cfg.input);
  if (cfg.payoff == "attention-sum") {
    if (!cfg.groups.empty()) throw gtattr::ValidationError("--groups is not supported with attention-sum");
    return gtattr::make_attention_sum_game(stack.layers.front());
  }
  const auto net = gtattr::build_network(stack, flow_players(cfg, stack), flow_options(cfg));
  if (cfg.payoff == "flow-restricted") return gtattr::restriction_game(net, gtattr::max_flow(net));
  if (cfg.payoff == "flow-recomputed") return gtattr::recomputed_game(net);
  throw gtattr::ValidationError("unknown payoff '" + cfg.payoff + "'");
}

void run_flow(const RunConfig& cfg) {
  require_input(cfg);
  const auto stack = gtattr::load_attention(cfg.input);
  emit_report(cfg, gtattr::attention_flow_values(stack, flow_players(cfg, stack), flow_options(cfg)));
}

void run_rollout(const RunConfig& cfg) {
  require_input(cfg);
  const auto stack = gtattr::load_attention(cfg.input);
  emit_report(cfg, gtattr::rollout_values(stack, flow_players(cfg, stack), flow_options(cfg)));
}

void run_shapley(const RunConfig& cfg) {
  if (cfg.exact == (cfg.samples > 0)) {
    throw gtattr::ValidationError("shapley needs exactly one of --exact or --samples M");
  }
  const auto game = load_game(cfg);
  if (cfg.exact) {
    if (game.n() > gtattr::kMaxExactPlayers) {
      throw gtattr::GuardError("exact Shapley is limited to 20 players (got " + std::to_string(game.n()) +
                               "); rerun with --samples M for the Monte Carlo estimate");
    }
    auto report = gtattr::exact_shapley(game, {cfg.workers});
    report.metadata["payoff"] = cfg.payoff;
    emit_report(cfg, std::move(report));
    return;
  }
  gtattr::EstimatorConfig est;
  est.m = cfg.samples;
  est.seed = cfg.seed;
  est.workers = cfg.workers;
  auto report = gtattr::monte_carlo_shapley(game, est);
  report.metadata["payoff"] = cfg.payoff;
  emit_report(cfg, std::move(report));
}

void run_loo(const RunConfig& cfg) {
  auto report = gtattr::leave_one_out(load_game(cfg));
  report.metadata["payoff"] = cfg.payoff;
  emit_report(cfg, std::move(report));
}

gtattr::TrialConfig trial_config(const RunConfig& cfg) {
  gtattr::TrialConfig tc;
  tc.trials = cfg.trials;
  tc.n_range = {cfg.n_min, cfg.n_max};
  tc.layer_range = {cfg.l_min, cfg.l_max};
  tc.seed = cfg.seed;
  tc.workers = cfg.workers;
  tc.flow = flow_options(cfg);
  return tc;
}

void run_verify(const RunConfig& cfg) {
  gtattr::PropositionVerdict verdict;
  if (cfg.proposition == "prop2") {
    verdict = cfg.input.empty()
                  ? gtattr::verify_prop2(trial_config(cfg))
                  : [&] {
                      const auto stack = gtattr::load_attention(cfg.input);
                      return gtattr::compare_flow_to_shapley(stack, flow_players(cfg, stack), flow_options(cfg), false);
                    }();
  } else if (cfg.proposition == "prop2-gap") {
    verdict = cfg.input.empty()
                  ? gtattr::measure_prop2_gap_recomputed(trial_config(cfg))
                  : [&] {
                      const auto stack = gtattr::load_attention(cfg.input);
                      return gtattr::compare_flow_to_shapley(stack, flow_players(cfg, stack), flow_options(cfg), true);
                    }();
  } else if (cfg.proposition == "prop1") {
    verdict = cfg.input.empty() ? gtattr::demonstrate_prop1_trials(trial_config(cfg))
                                : gtattr::demonstrate_prop1(gtattr::load_attention(cfg.input));
  } else if (cfg.proposition == "prop3") {
    require_input(cfg);
    auto game = gtattr::load_tabulated_game(cfg.input, cfg.zero_fill);
    if (!cfg.groups.empty()) game = gtattr::group_players(game, parse_groups(cfg.groups));
    verdict = gtattr::demonstrate_prop3(game);
  } else {
    throw gtattr::ValidationError("unknown proposition '" + cfg.proposition + "'");
  }
  emit_json(cfg, gtattr::verdict_to_json(verdict));
}

void run_axioms(const RunConfig& cfg) {
  const auto game = load_game(cfg);
  const auto report = gtattr::exact_shapley(game, {cfg.workers});
  nlohmann::json doc;
  std::size_t violations = 0;
  const bool efficient = gtattr::check_efficiency(report);
  violations += efficient ? 0 : 1;
  doc["values"] = report.values;
  doc["v_grand"] = report.v_grand;
  doc["efficiency"] = efficient;
  nlohmann::json nulls = nlohmann::json::array();
  for (std::size_t i = 0; i < game.n(); ++i) {
    const auto v = gtattr::check_null_player(game, i, report);
    violations += v.satisfied() ? 0 : 1;
    nulls.push_back({{"player", i}, {"is_null", v.premise}, {"value_is_zero", v.conclusion}});
  }
  doc["null_player"] = std::move(nulls);
  nlohmann::json pairs = nlohmann::json::array();
  for (std::size_t i = 0; i < game.n(); ++i) {
    for (std::size_t j = i + 1; j < game.n(); ++j) {
      const auto v = gtattr::check_symmetry(game, i, j, report);
      violations += v.satisfied() ? 0 : 1;
      pairs.push_back({{"pair", {i, j}}, {"symmetric", v.premise}, {"values_equal", v.conclusion}});
    }
  }
  doc["symmetry"] = std::move(pairs);
  if (!cfg.additive_with.empty()) {
    const auto other = gtattr::load_tabulated_game(cfg.additive_with, cfg.zero_fill);
    const auto add = gtattr::check_additivity(game, other);
    violations += add.holds ? 0 : 1;
    doc["additivity"] = {{"holds", add.holds}, {"max_abs_diff", add.max_abs_diff}};
  }
  doc["violations"] = violations;
  emit_json(cfg, doc);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Game-theoretic and attention-based attributions"};
  app.require_subcommand(1);
  RunConfig cfg;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--input,-i", cfg.input, "Input file (attention interchange or game JSON)");
    sub->add_option("--output,-o", cfg.output, "Output path (default: stdout)");
    sub->add_option("--format", cfg.format, "Output format")->check(CLI::IsMember({"json", "csv"}));
    sub->add_option("--workers", cfg.workers, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", cfg.seed, "Seed (default: $GTATTR_SEED, else 0)")
        ->each([&](const std::string&) { cfg.seed_given = true; });
  };
  auto add_players = [&](CLI::App* sub) {
    sub->add_option("--groups", cfg.groups, "Player groups of input tokens, e.g. \"0,1;2\"");
  };
  auto add_flow = [&](CLI::App* sub) {
    sub->add_option("--sink", cfg.sink, "full or target:k");
    sub->add_flag("--residual", cfg.residual, "Mix each layer with the identity");
    sub->add_option("--residual-weight", cfg.residual_weight, "Identity weight in (0, 1)");
  };
  auto add_payoff = [&](CLI::App* sub) {
    sub->add_option("--payoff", cfg.payoff, "Payoff function")
        ->check(CLI::IsMember({"tabulated", "flow-restricted", "flow-recomputed", "attention-sum"}));
    sub->add_flag("--zero-fill", cfg.zero_fill, "Default missing table entries to 0");
  };

  auto* flow = app.add_subcommand("flow", "Attention flow per player");
  auto* rollout = app.add_subcommand("rollout", "Attention rollout per player");
  auto* shapley = app.add_subcommand("shapley", "Exact or Monte Carlo Shapley values");
  auto* loo = app.add_subcommand("loo", "Leave-one-out values");
  auto* verify = app.add_subcommand("verify", "Check a proposition numerically");
  auto* axioms = app.add_subcommand("axioms", "Check the Shapley axioms on a game");

  for (auto* sub : {flow, rollout, shapley, loo, verify, axioms}) add_common(sub);
  for (auto* sub : {flow, rollout, shapley, loo, verify, axioms}) add_players(sub);
  for (auto* sub : {flow, rollout, shapley, loo, verify, axioms}) add_flow(sub);
  for (auto* sub : {shapley, loo, axioms}) add_payoff(sub);
  verify->add_flag("--zero-fill", cfg.zero_fill, "Default missing table entries to 0");

  shapley->add_flag("--exact", cfg.exact, "Enumerate all coalitions (n <= 20)");
  shapley->add_option("--samples,-m", cfg.samples, "Sample M permutations");

  verify->add_option("proposition", cfg.proposition, "prop1, prop2, prop2-gap or prop3")
      ->required()
      ->check(CLI::IsMember({"prop1", "prop2", "prop2-gap", "prop3"}));
  verify->add_option("--trials", cfg.trials, "Random trials");
  verify->add_option("--n-min", cfg.n_min, "Smallest token count");
  verify->add_option("--n-max", cfg.n_max, "Largest token count");
  verify->add_option("--l-min", cfg.l_min, "Fewest layers");
  verify->add_option("--l-max", cfg.l_max, "Most layers");

  axioms->add_option("--additive-with", cfg.additive_with, "Second game for the additivity check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  cfg.command = app.get_subcommands().front()->get_name();
  if (!cfg.seed_given) {
    if (const char* env = std::getenv("GTATTR_SEED"); env != nullptr && *env != '\0') {
      try {
        cfg.seed = std::stoull(env);
      } catch (const std::exception&) {
        std::cerr << "gtattr: GTATTR_SEED is not an unsigned integer: " << env << "\n";
        return kExitValidation;
      }
    }
  }

  try {
    if (cfg.command == "flow") run_flow(cfg);
    else if (cfg.command == "rollout") run_rollout(cfg);
    else if (cfg.command == "shapley") run_shapley(cfg);
    else if (cfg.command == "loo") run_loo(cfg);
    else if (cfg.command == "verify") run_verify(cfg);
    else if (cfg.command == "axioms") run_axioms(cfg);
  } catch (const gtattr::GuardError& e) {
    std::cerr << "gtattr: " << e.what() << "\n";
    return kExitGuard;
  } catch (const std::exception& e) {
    std::cerr << "gtattr: " << e.what() << "\n";
    return kExitValidation;
  }
  return 0;
}
