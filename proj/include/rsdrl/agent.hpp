#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "rsdrl/approximator.hpp"
#include "rsdrl/grid_world.hpp"
#include "rsdrl/oracle.hpp"
#include "rsdrl/return_distribution.hpp"

namespace rsdrl {

enum class AgentKind { RiskSensitive, Dqn };
std::string_view to_string(AgentKind k);  // "rs", "dqn"
AgentKind parse_agent_kind(std::string_view name);

/// How the distributional agent ranks actions: by utility (risk-sensitive) or
/// by expectation alone (risk-neutral distributional agent).
enum class ActionCriterion { Utility, Expectation };
std::string_view to_string(ActionCriterion c);
ActionCriterion parse_action_criterion(std::string_view name);

enum class EpsilonSchedule { Linear, Exponential };
std::string_view to_string(EpsilonSchedule s);
EpsilonSchedule parse_epsilon_schedule(std::string_view name);

/// Evaluation points of the Cramer loss: the fixed support grid, or n_z
/// points drawn uniformly in [z_min, z_max] for every minibatch.
enum class ZSampling { Grid, Uniform };
std::string_view to_string(ZSampling s);
ZSampling parse_z_sampling(std::string_view name);

struct AgentConfig {
  AgentKind kind = AgentKind::RiskSensitive;
  ActionCriterion criterion = ActionCriterion::Utility;
  RiskParams risk;

  std::vector<int> hidden = {128, 128};
  Activation activation = Activation::Softplus;
  double learning_rate = 1e-4;
  double adam_epsilon = 1e-5;
  ClipMode clip_mode = ClipMode::Norm;
  double clip_bound = 1.0;

  std::size_t replay_capacity = 10000;
  int batch_size = 32;
  long target_update = 1000;
  long warmup = 1000;
  SupportGrid grid;
  ZSampling z_sampling = ZSampling::Grid;
  CramerForm cramer_form = CramerForm::Squared;

  double epsilon_initial = 1.0;
  double epsilon_final = 0.01;
  long epsilon_decay = 10000;
  EpsilonSchedule epsilon_schedule = EpsilonSchedule::Linear;

  int episode_cap = kTrainingEpisodeCap;
  long total_steps = 50000;
  /// Greedy R_s evaluation cadence in steps (0 disables) and its episode count.
  long eval_every = 1000;
  long eval_episodes = 100;

  std::uint64_t seed = 0;

  /// Throws std::invalid_argument naming the first offending field.
  void validate() const;
};

/// Linear: straight line from epsilon_initial at step 0 to epsilon_final at
/// epsilon_decay, flat afterwards. Exponential: epsilon_final plus a gap that
/// shrinks by e^-5 over epsilon_decay steps.
double epsilon_at(long step, const AgentConfig& cfg);

struct Experience {
  GridState s;
  MoveAction a = MoveAction::Right;
  double r = 0.0;
  GridState s_next;
  bool terminal = false;
};

/// Fixed-capacity FIFO experience store.
class ReplayMemory {
 public:
  explicit ReplayMemory(std::size_t capacity);

  void push(const Experience& e);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return buffer_.size(); }
  /// i = 0 is the oldest stored experience.
  const Experience& at(std::size_t i) const;
  /// Uniform draw with replacement.
  std::vector<Experience> sample(std::size_t n, std::mt19937_64& rng) const;

 private:
  std::vector<Experience> buffer_;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
};

/// Score used for greedy choices over one action's atom CDF.
double action_score(const SupportGrid& grid, std::span<const double> cdf, const RiskParams& p,
                    ActionCriterion criterion);

/// Greedy action over four atom CDFs; ties go to the lowest index.
MoveAction greedy_action(const SupportGrid& grid,
                         const std::array<std::vector<double>, kNumActions>& cdfs,
                         const RiskParams& p, ActionCriterion criterion = ActionCriterion::Utility);

/// Epsilon-greedy choice. One uniform draw is consumed on every call (plus one
/// more when exploring) so streams stay aligned whatever the network says.
MoveAction select_action(const CdfNetwork& net, GridState s, const RiskParams& p, double eps,
                         std::mt19937_64& rng,
                         ActionCriterion criterion = ActionCriterion::Utility);
MoveAction select_action(const QNetwork& net, GridState s, double eps, std::mt19937_64& rng);

/// Frozen target network with every state's atom CDFs and greedy action
/// precomputed (there are only nine states).
class TargetModel {
 public:
  TargetModel(const CdfNetwork& net, const RiskParams& p,
              ActionCriterion criterion = ActionCriterion::Utility);

  const CdfNetwork& network() const { return net_; }
  MoveAction greedy(GridState s) const { return greedy_[static_cast<std::size_t>(s.index())]; }
  std::span<const double> atom_cdf(GridState s, MoveAction a) const {
    return cdfs_[static_cast<std::size_t>(s.index())][static_cast<std::size_t>(to_index(a))];
  }

 private:
  CdfNetwork net_;
  std::array<std::array<std::vector<double>, kNumActions>, kNumStates> cdfs_;
  std::array<MoveAction, kNumStates> greedy_{};
};

/// Cramer TD targets, one row per experience: a unit step at r for terminal
/// transitions, otherwise the target CDF of the greedy next action evaluated
/// at (z - r) / gamma.
Matrix compute_targets(const TargetModel& target, std::span<const Experience> batch,
                       std::span<const double> z_points, double gamma);

/// r + gamma max_a' Q_target(s', a'), or r for terminal transitions.
std::vector<double> compute_td_targets(const QNetwork& target, std::span<const Experience> batch,
                                       double gamma);

/// Greedy action per state frozen from a network.
class PolicySnapshot {
 public:
  PolicySnapshot() = default;
  PolicySnapshot(PolicyTable table, std::vector<double> params, RiskParams risk);

  MoveAction action(GridState s) const { return table_[static_cast<std::size_t>(s.index())]; }
  const PolicyTable& table() const { return table_; }
  std::span<const double> params() const { return params_; }
  const RiskParams& risk_params() const { return risk_; }

 private:
  PolicyTable table_{};
  std::vector<double> params_;
  RiskParams risk_;
};

PolicySnapshot snapshot_policy(const CdfNetwork& net, const RiskParams& p,
                               ActionCriterion criterion = ActionCriterion::Utility);
PolicySnapshot snapshot_policy(const QNetwork& net);

struct StepMetrics {
  long step = 0;
  MoveAction action = MoveAction::Right;
  std::optional<double> loss;
  double epsilon = 0.0;
  std::optional<double> episode_return;
  std::optional<int> episode_length;
  /// Mean R_s of a greedy evaluation run after this step, when one was due.
  std::optional<double> rs;
};

/// One training run: owns its environment, networks, optimiser and replay memory.
class Trainer {
 public:
  virtual ~Trainer() = default;

  /// One environment interaction and, past warm-up, one gradient step.
  StepMetrics train_step();
  std::vector<StepMetrics> train(long steps);

  long step() const { return step_; }
  const AgentConfig& config() const { return cfg_; }
  const EnvLayout& layout() const { return env_.layout(); }
  const ReplayMemory& memory() const { return memory_; }

  virtual PolicySnapshot snapshot() const = 0;
  virtual std::span<const double> params() const = 0;
  virtual std::span<double> mutable_params() = 0;
  /// Loads parameters into both the main and the target network.
  void load_params(std::span<const double> params);

 protected:
  Trainer(const AgentConfig& cfg, const EnvLayout& layout);

  virtual MoveAction choose(GridState s, double eps) = 0;
  /// Returns the minibatch loss after applying one optimiser step.
  virtual double learn(std::span<const Experience> batch) = 0;
  virtual void sync_target() = 0;

  double apply_gradient(std::vector<double>& gradient);

  AgentConfig cfg_;
  GridWorld env_;
  ReplayMemory memory_;
  OptimizerState optimizer_;
  std::mt19937_64 exploration_rng_;
  std::mt19937_64 replay_rng_;
  std::mt19937_64 loss_rng_;

 private:
  long step_ = 0;
  double episode_return_ = 0.0;
  int episode_length_ = 0;
};

class DistributionalTrainer final : public Trainer {
 public:
  DistributionalTrainer(const AgentConfig& cfg, const EnvLayout& layout);

  PolicySnapshot snapshot() const override;
  std::span<const double> params() const override { return net_.params(); }
  std::span<double> mutable_params() override { return net_.params(); }
  const CdfNetwork& network() const { return net_; }
  const TargetModel& target() const { return *target_; }

 private:
  MoveAction choose(GridState s, double eps) override;
  double learn(std::span<const Experience> batch) override;
  void sync_target() override;

  CdfNetwork net_;
  std::unique_ptr<TargetModel> target_;
  std::vector<double> grid_points_;
};

class DqnTrainer final : public Trainer {
 public:
  DqnTrainer(const AgentConfig& cfg, const EnvLayout& layout);

  PolicySnapshot snapshot() const override;
  std::span<const double> params() const override { return net_.params(); }
  std::span<double> mutable_params() override { return net_.params(); }
  const QNetwork& network() const { return net_; }

 private:
  MoveAction choose(GridState s, double eps) override;
  double learn(std::span<const Experience> batch) override;
  void sync_target() override;

  QNetwork net_;
  QNetwork target_;
};

std::unique_ptr<Trainer> make_trainer(const AgentConfig& cfg, const EnvLayout& layout);

}  // namespace rsdrl
