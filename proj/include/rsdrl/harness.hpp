#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rsdrl/agent.hpp"
#include "rsdrl/checkpoint.hpp"
#include "rsdrl/oracle.hpp"

namespace rsdrl {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// One experiment: an environment, an agent configuration and a seed list.
/// `agent.seed` is ignored; every entry of `seeds` gives one run.
struct ExperimentConfig {
  EnvKind env = EnvKind::RiskyRewards;
  AgentConfig agent;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  /// Checkpoint cadence in steps (0 keeps only the final one).
  long checkpoint_every = 10000;
  long final_eval_episodes = kDefaultEvalEpisodes;
  RiskConstraint constraint;
  std::filesystem::path output_dir = "runs";

  /// Throws ConfigError naming the first offending field.
  void validate() const;
};

/// Every field, defaults included.
nlohmann::ordered_json to_json(const ExperimentConfig& c);
/// Missing keys keep their defaults; unknown keys and bad values throw
/// ConfigError with the dotted key path.
ExperimentConfig experiment_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment(const std::filesystem::path& path);

/// `<output_dir>/<env>/<agent>/seed-<n>`.
std::filesystem::path run_directory(const ExperimentConfig& c, std::uint64_t seed);

struct RunArtifact {
  std::filesystem::path directory;
  std::filesystem::path metrics_csv;
  std::filesystem::path config_echo;
  std::vector<std::filesystem::path> checkpoints;
  std::filesystem::path report_json;
  EvalReport report;
  PolicyTable policy{};
  std::uint64_t seed = 0;
};

/// Schema line of the metrics CSV.
inline constexpr const char* kMetricsHeader =
    "step,action,loss,epsilon,episode_return,episode_length,rs";

/// One CSV row; absent optionals are empty fields and doubles round-trip.
std::string metrics_row(const StepMetrics& m);

struct MetricsRecord {
  long step = 0;
  std::optional<double> loss;
  double epsilon = 0.0;
  std::optional<double> episode_return;
  std::optional<int> episode_length;
  std::optional<double> rs;
};
std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path);

/// Trains one seed and writes its run directory: config.json (single-seed
/// echo), metrics.csv, checkpoint-<step>.txt files and report.json.
RunArtifact run_seed(const ExperimentConfig& c, std::uint64_t seed,
                     std::ostream* progress = nullptr);
std::vector<RunArtifact> cmd_train(const ExperimentConfig& c, std::ostream* progress = nullptr);

nlohmann::ordered_json to_json(const EvalReport& r);
EvalReport eval_report_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Oracle

inline constexpr const char* kOracleHeader =
    "x,y,action,expectation,var,cvar,utility,greedy";

/// Writes the 36-row (state, action) table. A comment line starting with '#'
/// precedes the header when the iteration did not converge.
void write_oracle_csv(std::ostream& out, const OracleResult& r, const RiskParams& p);
/// Arrow map of the greedy policy, top row first; terminal cells show 'G'/'O'.
std::string policy_map(const EnvLayout& layout, const PolicyTable& policy);

// ---------------------------------------------------------------------------
// Report

struct AgentSummary {
  std::vector<std::uint64_t> seeds;
  std::vector<EvalReport> per_seed;
  double expectation = 0.0;
  double risk = 0.0;
  double utility = 0.0;
  double mean_rs = 0.0;
};

struct ReportRow {
  EnvKind env = EnvKind::RiskyRewards;
  RiskParams risk;
  AgentSummary dqn;
  AgentSummary rs;
  /// Monte Carlo statistics of the oracle's utility-greedy policy.
  EvalReport oracle;
};

/// Reads every `<root>/<env>/{dqn,rs}/seed-*/report.json`. Throws
/// std::runtime_error naming the missing runs.
std::vector<ReportRow> collect_report(const std::filesystem::path& root,
                                      long oracle_episodes = kDefaultEvalEpisodes);
void print_report(std::ostream& out, const std::vector<ReportRow>& rows);
void write_report_csv(std::ostream& out, const std::vector<ReportRow>& rows);

// ---------------------------------------------------------------------------
// Risk-sensitivity curve

struct CurvePoint {
  long step = 0;
  double mean_rs = 0.0;
};

/// Mean R_s of `n_eval` greedy rollouts for each (step, policy) pair.
std::vector<CurvePoint> risk_sensitivity_curve(
    std::span<const std::pair<long, PolicyTable>> policies, const EnvLayout& layout,
    long n_eval = 100, std::uint64_t seed = 0);
/// Same, over every checkpoint-<step>.txt of a run directory, by step.
/// Throws std::runtime_error when the directory holds no checkpoint.
std::vector<CurvePoint> risk_sensitivity_curve(const std::filesystem::path& run_dir,
                                               long n_eval = 100, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Plots

/// R_s against training step for both agents, one line per seed plus the
/// seed mean. Writes rs_curve-<env>.svg and .csv into `out_dir`.
std::vector<std::filesystem::path> plot_rs_curve(const std::filesystem::path& root, EnvKind env,
                                                 const std::filesystem::path& out_dir);

/// CDF and PDF of every action at `state` with markers at Q, R and U, plus
/// the oracle CDF for comparison. Writes distributions-<x>-<y>.svg and .csv.
std::vector<std::filesystem::path> plot_distributions(const Checkpoint& ckpt, GridState state,
                                                      const std::filesystem::path& out_dir);

/// Parses "x,y"; throws std::invalid_argument on bad or out-of-grid input.
GridState parse_state(const std::string& text);

}  // namespace rsdrl
