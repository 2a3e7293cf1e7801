#include <CLI11.hpp>

#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "rsdrl/harness.hpp"

namespace {

using namespace rsdrl;

struct Overrides {
  std::string config;
  std::optional<std::string> env;
  std::optional<std::string> agent;
  std::optional<double> alpha;
  std::optional<double> rho;
  std::optional<std::string> risk;
  std::optional<std::uint64_t> seed;
  std::optional<long> steps;
  std::optional<std::string> out;
};

void add_risk_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--alpha", o.alpha, "risk trade-off in [0, 1]");
  cmd->add_option("--rho", o.rho, "risk level in (0, 1)");
  cmd->add_option("--risk", o.risk, "risk measure")->check(CLI::IsMember({"var", "cvar"}));
}

ExperimentConfig resolve(const Overrides& o) {
  ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_experiment(o.config);
  if (o.env) c.env = parse_env_kind(*o.env);
  if (o.agent) c.agent.kind = parse_agent_kind(*o.agent);
  if (o.alpha) c.agent.risk.alpha = *o.alpha;
  if (o.rho) c.agent.risk.rho = *o.rho;
  if (o.risk) c.agent.risk.measure = parse_risk_measure(*o.risk);
  if (o.seed) c.seeds = {*o.seed};
  if (o.steps) c.agent.total_steps = *o.steps;
  if (o.out) c.output_dir = *o.out;
  c.validate();
  return c;
}

int cmd_train_main(const Overrides& o) {
  const ExperimentConfig c = resolve(o);
  for (const auto& art : cmd_train(c, &std::cerr)) {
    const auto& r = art.report;
    std::cout << to_string(c.env) << ' ' << to_string(c.agent.kind) << " seed " << art.seed
              << ": E=" << r.mean << " R=" << r.risk << " U=" << r.utility
              << " R_s=" << r.mean_rs << "  (" << art.directory.string() << ")\n"
              << policy_map(layout_for(c.env), art.policy);
  }
  return 0;
}

int cmd_oracle_main(const Overrides& o) {
  const ExperimentConfig c = resolve(o);
  const RiskParams& p = c.agent.risk;
  const auto result = distributional_value_iteration(c.env, p, c.agent.grid);
  std::filesystem::create_directories(c.output_dir);
  const auto stem = c.output_dir / ("oracle-" + std::string(to_string(c.env)));
  {
    std::ofstream csv(stem.string() + ".csv");
    if (!csv) throw std::runtime_error("cannot write " + stem.string() + ".csv");
    write_oracle_csv(csv, result, p);
  }
  const std::string map = policy_map(layout_for(c.env), result.policy);
  {
    std::ofstream txt(stem.string() + "-policy.txt");
    txt << map;
  }
  if (!result.converged) std::cerr << "warning: oracle did not converge\n";
  std::cout << to_string(c.env) << " alpha=" << p.alpha << " rho=" << p.rho << " "
            << to_string(p.measure) << " (" << result.iterations << " iterations)\n"
            << map << "wrote " << stem.string() << ".csv\n";
  return 0;
}

int cmd_report_main(const std::string& root, long oracle_episodes) {
  const auto rows = collect_report(root, oracle_episodes);
  print_report(std::cout, rows);
  const auto path = std::filesystem::path(root) / "report.csv";
  std::ofstream csv(path);
  if (!csv) throw std::runtime_error("cannot write " + path.string());
  write_report_csv(csv, rows);
  std::cout << "wrote " << path.string() << '\n';
  return 0;
}

int cmd_plot_main(const std::string& what, const Overrides& o, const std::string& checkpoint,
                  const std::string& state) {
  const std::string root = o.out.value_or("runs");
  const std::filesystem::path plot_dir = std::filesystem::path(root) / "plots";
  std::vector<std::filesystem::path> written;
  if (what == "rs_curve") {
    if (o.env) {
      written = plot_rs_curve(root, parse_env_kind(*o.env), plot_dir);
    } else {
      for (EnvKind env : kAllEnvKinds) {
        if (!std::filesystem::exists(std::filesystem::path(root) / std::string(to_string(env)))) {
          continue;
        }
        for (auto& p : plot_rs_curve(root, env, plot_dir)) written.push_back(p);
      }
    }
  } else {
    if (checkpoint.empty()) throw std::invalid_argument("plot distributions needs --checkpoint");
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    const GridState s = state.empty() ? layout_for(ckpt.env).start : parse_state(state);
    written = plot_distributions(ckpt, s, plot_dir);
  }
  for (const auto& p : written) std::cout << "wrote " << p.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Risk-sensitive distributional RL on grid-world benchmarks"};
  app.require_subcommand(1);

  Overrides train_o, oracle_o, plot_o;
  auto* train = app.add_subcommand("train", "train agents and write run artifacts");
  train->add_option("--config", train_o.config, "JSON experiment config")->check(CLI::ExistingFile);
  train->add_option("--env", train_o.env, "environment")
      ->check(CLI::IsMember({"risky-rewards", "risky-transitions", "risky-grid-world"}));
  train->add_option("--agent", train_o.agent, "agent kind")->check(CLI::IsMember({"dqn", "rs"}));
  add_risk_flags(train, train_o);
  train->add_option("--seed", train_o.seed, "single seed (replaces the seed list)");
  train->add_option("--steps", train_o.steps, "training steps per run");
  train->add_option("--out", train_o.out, "output directory");

  auto* oracle = app.add_subcommand("oracle", "distributional value iteration table and policy");
  oracle->add_option("--config", oracle_o.config, "JSON experiment config")
      ->check(CLI::ExistingFile);
  oracle->add_option("--env", oracle_o.env, "environment")
      ->check(CLI::IsMember({"risky-rewards", "risky-transitions", "risky-grid-world"}));
  add_risk_flags(oracle, oracle_o);
  oracle->add_option("--out", oracle_o.out, "output directory");

  std::string report_root = "runs";
  long oracle_episodes = kDefaultEvalEpisodes;
  auto* report = app.add_subcommand("report", "E / R / U comparison table over finished runs");
  report->add_option("--out", report_root, "root directory of the runs");
  report->add_option("--oracle-episodes", oracle_episodes, "Monte Carlo episodes for the oracle")
      ->check(CLI::PositiveNumber);

  std::string what, checkpoint, state;
  auto* plot = app.add_subcommand("plot", "SVG plots (and CSV data) from run artifacts");
  plot->add_option("what", what, "rs_curve or distributions")
      ->required()
      ->check(CLI::IsMember({"rs_curve", "distributions"}));
  plot->add_option("--out", plot_o.out, "root directory of the runs");
  plot->add_option("--env", plot_o.env, "environment (rs_curve; default: all present)")
      ->check(CLI::IsMember({"risky-rewards", "risky-transitions", "risky-grid-world"}));
  plot->add_option("--checkpoint", checkpoint, "checkpoint file (distributions)")
      ->check(CLI::ExistingFile);
  plot->add_option("--state", state, "decision state as x,y (default: start state)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train_main(train_o);
    if (*oracle) return cmd_oracle_main(oracle_o);
    if (*report) return cmd_report_main(report_root, oracle_episodes);
    if (*plot) return cmd_plot_main(what, plot_o, checkpoint, state);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
