#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "rsdrl/grid_world.hpp"
#include "rsdrl/return_distribution.hpp"

namespace rsdrl {

/// Greedy action per state, indexed by GridState::index().
using PolicyTable = std::array<MoveAction, kNumStates>;

/// Scores a return distribution; greedy policies maximise it.
using ActionScore = std::function<double(const ReturnDistribution&)>;

ActionScore utility_score(const RiskParams& p);

/// Return distribution for every (state, action) pair.
class TabularDistributionTable {
 public:
  TabularDistributionTable() = default;
  explicit TabularDistributionTable(const SupportGrid& grid);

  const SupportGrid& grid() const { return grid_; }
  const ReturnDistribution& at(GridState s, MoveAction a) const {
    return entries_[static_cast<std::size_t>(s.index() * kNumActions + to_index(a))];
  }
  void set(GridState s, MoveAction a, ReturnDistribution d) {
    entries_[static_cast<std::size_t>(s.index() * kNumActions + to_index(a))] = std::move(d);
  }
  /// Largest |F_new(z_k) - F_old(z_k)| over all entries and grid points.
  double sup_distance(const TabularDistributionTable& other) const;

 private:
  SupportGrid grid_;
  std::vector<ReturnDistribution> entries_;
};

PolicyTable greedy_policy(const TabularDistributionTable& table, const ActionScore& score);

/// Cell masses of a Gaussian-mixture reward on the grid: each component is
/// truncated at +-5 sigma and every cell (z_{k-1}, z_k] receives its exact
/// Gaussian mass. Mass below z_min lands on cell 0, above z_max on the last.
std::vector<double> discretize_reward(const RewardLaw& law, const SupportGrid& grid);

/// Applies Z(s,a) = R(s') + gamma Z(s', policy(s')) once to every pair,
/// enumerating wind outcomes exactly.
TabularDistributionTable bellman_backup(const EnvLayout& layout,
                                        const TabularDistributionTable& table,
                                        const PolicyTable& policy);

namespace serial {
TabularDistributionTable bellman_backup(const EnvLayout& layout,
                                        const TabularDistributionTable& table,
                                        const PolicyTable& policy);
}

struct OracleResult {
  TabularDistributionTable table;
  PolicyTable policy{};
  int iterations = 0;
  /// Sup-norm CDF change of the last iteration.
  double final_change = 0.0;
  bool converged = false;
};

inline constexpr int kDefaultOracleIterations = 60;
inline constexpr double kOracleTolerance = 1e-6;

/// Distributional optimality iteration: each sweep backs up every pair using
/// the successor's greedy action under `score`, then the greedy policy is
/// refreshed. Stops early once the table changes by less than kOracleTolerance.
OracleResult distributional_value_iteration(const EnvLayout& layout, const ActionScore& score,
                                            const SupportGrid& grid = {},
                                            int iterations = kDefaultOracleIterations);
OracleResult distributional_value_iteration(EnvKind kind, const RiskParams& p,
                                            const SupportGrid& grid = {},
                                            int iterations = kDefaultOracleIterations);

/// States reachable with non-zero probability from the start state under
/// `policy` (terminal cells excluded).
std::vector<GridState> reachable_states(const EnvLayout& layout, const PolicyTable& policy);

// ---------------------------------------------------------------------------
// Monte Carlo policy evaluation

struct RiskConstraint {
  double r_min = -0.5;
  double eps_threshold = 0.1;

  void validate() const;
};

struct EvalReport {
  long episodes = 0;
  double mean = 0.0;
  double mean_half_width = 0.0;
  double risk = 0.0;
  double utility = 0.0;
  double mean_rs = 0.0;
  double rs_half_width = 0.0;
  /// Fraction of episodes with S <= r_min.
  double constraint_probability = 0.0;
  bool constraint_satisfied = false;
  std::size_t clipped = 0;
  RiskParams risk_params;
  RiskConstraint constraint;
};

struct EpisodeResult {
  double undiscounted = 0.0;
  double discounted = 0.0;
  int rs = 0;
  int length = 0;
};

/// One greedy rollout from the start state. Returns accumulate for up to
/// `cap` moves; R_s looks at the first kEvaluationHorizon moves.
EpisodeResult run_episode(const PolicyTable& policy, GridWorld& env,
                          std::optional<MoveAction> first_action = std::nullopt,
                          int cap = kTrainingEpisodeCap);

/// Rolls out `n_episodes` greedy episodes in fixed-size chunks, each chunk on
/// its own seeded simulator, so results do not depend on the thread count.
std::vector<EpisodeResult> rollout_episodes(const PolicyTable& policy, const EnvLayout& layout,
                                            long n_episodes, std::uint64_t seed,
                                            std::optional<MoveAction> first_action = std::nullopt);

namespace serial {
std::vector<EpisodeResult> rollout_episodes(const PolicyTable& policy, const EnvLayout& layout,
                                            long n_episodes, std::uint64_t seed,
                                            std::optional<MoveAction> first_action = std::nullopt);
}

inline constexpr long kDefaultEvalEpisodes = 100000;

/// Statistics of the undiscounted cumulative reward S of greedy episodes.
EvalReport mc_evaluate(const PolicyTable& policy, const EnvLayout& layout, long n_episodes,
                       const RiskParams& p, const RiskConstraint& constraint, std::uint64_t seed,
                       const SupportGrid& grid = {});

/// Builds the report from already collected episodes.
EvalReport summarize_episodes(std::span<const EpisodeResult> episodes, const RiskParams& p,
                              const RiskConstraint& constraint, const SupportGrid& grid = {});

/// Mean R_s over `n_episodes` greedy rollouts.
double mean_risk_sensitivity(const PolicyTable& policy, const EnvLayout& layout, long n_episodes,
                             std::uint64_t seed);

}  // namespace rsdrl
