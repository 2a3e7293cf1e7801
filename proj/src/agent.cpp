#include "rsdrl/agent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "rsdrl/random.hpp"

namespace rsdrl {

namespace {

template <typename Enum, std::size_t N>
Enum parse_named(std::string_view name, const std::array<Enum, N>& values, const char* what) {
  std::string expected;
  for (Enum v : values) {
    if (to_string(v) == name) return v;
    if (!expected.empty()) expected += ", ";
    expected += to_string(v);
  }
  throw std::invalid_argument("unknown " + std::string(what) + " '" + std::string(name) +
                              "' (expected one of: " + expected + ")");
}

void require(bool ok, const char* field, const char* rule) {
  if (!ok) throw std::invalid_argument(std::string("agent config: ") + field + " " + rule);
}

}  // namespace

std::string_view to_string(AgentKind k) { return k == AgentKind::Dqn ? "dqn" : "rs"; }
AgentKind parse_agent_kind(std::string_view name) {
  return parse_named(name, std::array{AgentKind::RiskSensitive, AgentKind::Dqn}, "agent");
}

std::string_view to_string(ActionCriterion c) {
  return c == ActionCriterion::Expectation ? "expectation" : "utility";
}
ActionCriterion parse_action_criterion(std::string_view name) {
  return parse_named(name, std::array{ActionCriterion::Utility, ActionCriterion::Expectation},
                     "criterion");
}

std::string_view to_string(EpsilonSchedule s) {
  return s == EpsilonSchedule::Exponential ? "exponential" : "linear";
}
EpsilonSchedule parse_epsilon_schedule(std::string_view name) {
  return parse_named(name, std::array{EpsilonSchedule::Linear, EpsilonSchedule::Exponential},
                     "epsilon schedule");
}

std::string_view to_string(ZSampling s) { return s == ZSampling::Uniform ? "uniform" : "grid"; }
ZSampling parse_z_sampling(std::string_view name) {
  return parse_named(name, std::array{ZSampling::Grid, ZSampling::Uniform}, "z sampling");
}

void AgentConfig::validate() const {
  risk.validate();
  grid.validate();
  require(!hidden.empty(), "hidden", "must list at least one layer");
  for (int h : hidden) require(h > 0, "hidden", "sizes must be positive");
  require(learning_rate > 0.0, "learning_rate", "must be positive");
  require(adam_epsilon > 0.0, "adam_epsilon", "must be positive");
  require(clip_bound > 0.0, "clip_bound", "must be positive");
  require(replay_capacity > 0, "replay_capacity", "must be positive");
  require(batch_size > 0, "batch_size", "must be positive");
  require(static_cast<std::size_t>(batch_size) <= replay_capacity, "batch_size",
          "must not exceed replay_capacity");
  require(target_update > 0, "target_update", "must be positive");
  require(warmup >= 0, "warmup", "must be non-negative");
  require(epsilon_initial >= 0.0 && epsilon_initial <= 1.0, "epsilon_initial", "must lie in [0, 1]");
  require(epsilon_final >= 0.0 && epsilon_final <= epsilon_initial, "epsilon_final",
          "must lie in [0, epsilon_initial]");
  require(epsilon_decay > 0, "epsilon_decay", "must be positive");
  require(episode_cap > 0, "episode_cap", "must be positive");
  require(total_steps >= 0, "total_steps", "must be non-negative");
  require(eval_every >= 0, "eval_every", "must be non-negative");
  require(eval_episodes > 0, "eval_episodes", "must be positive");
}

double epsilon_at(long step, const AgentConfig& cfg) {
  if (step < 0) throw std::invalid_argument("epsilon_at: step must be non-negative");
  const double t = static_cast<double>(step) / static_cast<double>(cfg.epsilon_decay);
  const double gap = cfg.epsilon_initial - cfg.epsilon_final;
  if (cfg.epsilon_schedule == EpsilonSchedule::Exponential) {
    return cfg.epsilon_final + gap * std::exp(-5.0 * t);
  }
  return t >= 1.0 ? cfg.epsilon_final : cfg.epsilon_initial - gap * t;
}

// ---------------------------------------------------------------------------

ReplayMemory::ReplayMemory(std::size_t capacity) : buffer_(capacity) {
  if (capacity == 0) throw std::invalid_argument("ReplayMemory: capacity must be positive");
}

void ReplayMemory::push(const Experience& e) {
  buffer_[head_] = e;
  head_ = (head_ + 1) % buffer_.size();
  size_ = std::min(size_ + 1, buffer_.size());
}

const Experience& ReplayMemory::at(std::size_t i) const {
  if (i >= size_) throw std::out_of_range("ReplayMemory::at: index out of range");
  const std::size_t oldest = size_ < buffer_.size() ? 0 : head_;
  return buffer_[(oldest + i) % buffer_.size()];
}

std::vector<Experience> ReplayMemory::sample(std::size_t n, std::mt19937_64& rng) const {
  if (size_ == 0) throw std::logic_error("ReplayMemory::sample: memory is empty");
  std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
  std::vector<Experience> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(at(pick(rng)));
  return out;
}

// ---------------------------------------------------------------------------

double action_score(const SupportGrid& grid, std::span<const double> cdf, const RiskParams& p,
                    ActionCriterion criterion) {
  return criterion == ActionCriterion::Expectation ? expectation(grid, cdf)
                                                   : utility(grid, cdf, p);
}

MoveAction greedy_action(const SupportGrid& grid,
                         const std::array<std::vector<double>, kNumActions>& cdfs,
                         const RiskParams& p, ActionCriterion criterion) {
  MoveAction best = MoveAction::Right;
  double best_score = -std::numeric_limits<double>::infinity();
  for (MoveAction a : kAllActions) {
    const double v = action_score(grid, cdfs[static_cast<std::size_t>(to_index(a))], p, criterion);
    if (v > best_score) {
      best_score = v;
      best = a;
    }
  }
  return best;
}

namespace {

// Returns the exploratory action, if this draw explores.
std::optional<MoveAction> explore(double eps, std::mt19937_64& rng) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw std::invalid_argument("select_action: eps must lie in [0, 1]");
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (u >= eps) return std::nullopt;
  return action_from_index(std::uniform_int_distribution<int>(0, kNumActions - 1)(rng));
}

MoveAction argmax_q(const std::array<double, kNumActions>& q) {
  int best = 0;
  for (int a = 1; a < kNumActions; ++a) {
    if (q[static_cast<std::size_t>(a)] > q[static_cast<std::size_t>(best)]) best = a;
  }
  return action_from_index(best);
}

}  // namespace

MoveAction select_action(const CdfNetwork& net, GridState s, const RiskParams& p, double eps,
                         std::mt19937_64& rng, ActionCriterion criterion) {
  if (auto a = explore(eps, rng)) return *a;
  return greedy_action(net.atoms(), net.atom_cdfs(s), p, criterion);
}

MoveAction select_action(const QNetwork& net, GridState s, double eps, std::mt19937_64& rng) {
  if (auto a = explore(eps, rng)) return *a;
  return argmax_q(net.q_values(s));
}

// ---------------------------------------------------------------------------

TargetModel::TargetModel(const CdfNetwork& net, const RiskParams& p, ActionCriterion criterion)
    : net_(copy_to_target(net)) {
  for (int s = 0; s < kNumStates; ++s) {
    const GridState state = GridState::from_index(s);
    cdfs_[static_cast<std::size_t>(s)] = net_.atom_cdfs(state);
    greedy_[static_cast<std::size_t>(s)] =
        greedy_action(net_.atoms(), cdfs_[static_cast<std::size_t>(s)], p, criterion);
  }
}

Matrix compute_targets(const TargetModel& target, std::span<const Experience> batch,
                       std::span<const double> z_points, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("compute_targets: gamma must lie in (0, 1)");
  Matrix y(batch.size(), z_points.size());
  std::vector<double> shifted(z_points.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Experience& e = batch[i];
    auto row = y.row(i);
    if (e.terminal) {
      for (std::size_t j = 0; j < z_points.size(); ++j) row[j] = z_points[j] < e.r ? 0.0 : 1.0;
      continue;
    }
    for (std::size_t j = 0; j < z_points.size(); ++j) shifted[j] = (z_points[j] - e.r) / gamma;
    const auto values = interpolate_cdf(target.network().atoms(),
                                        target.atom_cdf(e.s_next, target.greedy(e.s_next)), shifted);
    std::copy(values.begin(), values.end(), row.begin());
  }
  return y;
}

std::vector<double> compute_td_targets(const QNetwork& target, std::span<const Experience> batch,
                                       double gamma) {
  std::array<std::optional<double>, kNumStates> best{};
  std::vector<double> y(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Experience& e = batch[i];
    if (e.terminal) {
      y[i] = e.r;
      continue;
    }
    auto& cached = best[static_cast<std::size_t>(e.s_next.index())];
    if (!cached) {
      const auto q = target.q_values(e.s_next);
      cached = *std::max_element(q.begin(), q.end());
    }
    y[i] = e.r + gamma * *cached;
  }
  return y;
}

// ---------------------------------------------------------------------------

PolicySnapshot::PolicySnapshot(PolicyTable table, std::vector<double> params, RiskParams risk)
    : table_(table), params_(std::move(params)), risk_(risk) {}

PolicySnapshot snapshot_policy(const CdfNetwork& net, const RiskParams& p,
                               ActionCriterion criterion) {
  PolicyTable table{};
  for (int s = 0; s < kNumStates; ++s) {
    table[static_cast<std::size_t>(s)] =
        greedy_action(net.atoms(), net.atom_cdfs(GridState::from_index(s)), p, criterion);
  }
  RiskParams frozen = p;
  if (criterion == ActionCriterion::Expectation) frozen.alpha = 1.0;
  return {table, {net.params().begin(), net.params().end()}, frozen};
}

PolicySnapshot snapshot_policy(const QNetwork& net) {
  PolicyTable table{};
  for (int s = 0; s < kNumStates; ++s) {
    table[static_cast<std::size_t>(s)] = argmax_q(net.q_values(GridState::from_index(s)));
  }
  RiskParams neutral;
  neutral.alpha = 1.0;
  return {table, {net.params().begin(), net.params().end()}, neutral};
}

// ---------------------------------------------------------------------------

Trainer::Trainer(const AgentConfig& cfg, const EnvLayout& layout)
    : cfg_((cfg.validate(), cfg)),
      env_(layout, cfg.seed),
      memory_(cfg.replay_capacity),
      exploration_rng_(make_stream(cfg.seed, StreamId::Exploration)),
      replay_rng_(make_stream(cfg.seed, StreamId::ReplaySampling)),
      loss_rng_(make_stream(cfg.seed, StreamId::LossSampling)) {
  env_.reset();
}

double Trainer::apply_gradient(std::vector<double>& gradient) {
  const double norm = clip_gradient(gradient, cfg_.clip_mode, cfg_.clip_bound);
  optimizer_step(mutable_params(), optimizer_, gradient);
  return norm;
}

void Trainer::load_params(std::span<const double> params) {
  auto dst = mutable_params();
  if (params.size() != dst.size()) {
    throw std::invalid_argument("load_params: expected " + std::to_string(dst.size()) +
                                " parameters, got " + std::to_string(params.size()));
  }
  std::copy(params.begin(), params.end(), dst.begin());
  sync_target();
}

StepMetrics Trainer::train_step() {
  StepMetrics m;
  m.epsilon = epsilon_at(step_, cfg_);
  const GridState s = env_.state();
  m.action = choose(s, m.epsilon);
  const StepOutcome out = env_.step(m.action);
  memory_.push({s, m.action, out.reward, out.next_state, out.terminal});
  episode_return_ += out.reward;
  ++episode_length_;
  if (out.terminal || episode_length_ >= cfg_.episode_cap) {
    m.episode_return = episode_return_;
    m.episode_length = episode_length_;
    episode_return_ = 0.0;
    episode_length_ = 0;
    env_.reset();
  }

  const auto needed = std::max<std::size_t>(static_cast<std::size_t>(cfg_.warmup),
                                            static_cast<std::size_t>(cfg_.batch_size));
  if (memory_.size() >= needed) {
    const auto batch = memory_.sample(static_cast<std::size_t>(cfg_.batch_size), replay_rng_);
    m.loss = learn(batch);
  }

  ++step_;
  m.step = step_;
  if (step_ % cfg_.target_update == 0) sync_target();
  if (cfg_.eval_every > 0 && step_ % cfg_.eval_every == 0) {
    m.rs = mean_risk_sensitivity(snapshot().table(), env_.layout(), cfg_.eval_episodes,
                                 derive_seed(cfg_.seed, StreamId::Evaluation,
                                             static_cast<std::uint64_t>(step_)));
  }
  return m;
}

std::vector<StepMetrics> Trainer::train(long steps) {
  std::vector<StepMetrics> out;
  out.reserve(static_cast<std::size_t>(std::max(0L, steps)));
  for (long i = 0; i < steps; ++i) out.push_back(train_step());
  return out;
}

// ---------------------------------------------------------------------------

DistributionalTrainer::DistributionalTrainer(const AgentConfig& cfg, const EnvLayout& layout)
    : Trainer(cfg, layout), net_(cfg.grid, cfg.hidden, cfg.activation) {
  net_.initialize(cfg.seed);
  optimizer_ = OptimizerState::for_params(net_.params().size(), cfg.learning_rate, cfg.adam_epsilon);
  grid_points_ = cfg.grid.points();
  sync_target();
}

void DistributionalTrainer::sync_target() {
  target_ = std::make_unique<TargetModel>(net_, cfg_.risk, cfg_.criterion);
}

MoveAction DistributionalTrainer::choose(GridState s, double eps) {
  return select_action(net_, s, cfg_.risk, eps, exploration_rng_, cfg_.criterion);
}

double DistributionalTrainer::learn(std::span<const Experience> batch) {
  std::vector<double> z_points = grid_points_;
  if (cfg_.z_sampling == ZSampling::Uniform) {
    std::uniform_real_distribution<double> u(cfg_.grid.z_min, cfg_.grid.z_max);
    for (auto& z : z_points) z = u(loss_rng_);
  }
  const Matrix y = compute_targets(*target_, batch, z_points, env_.gamma());
  std::vector<SampleInput> inputs;
  inputs.reserve(batch.size());
  for (const auto& e : batch) inputs.push_back({e.s, e.a});
  LossGradient lg = loss_and_gradient(net_, y, inputs, z_points, cfg_.cramer_form);
  apply_gradient(lg.gradient);
  return lg.loss;
}

PolicySnapshot DistributionalTrainer::snapshot() const {
  return snapshot_policy(net_, cfg_.risk, cfg_.criterion);
}

DqnTrainer::DqnTrainer(const AgentConfig& cfg, const EnvLayout& layout)
    : Trainer(cfg, layout), net_(cfg.hidden, cfg.activation) {
  net_.initialize(cfg.seed);
  optimizer_ = OptimizerState::for_params(net_.params().size(), cfg.learning_rate, cfg.adam_epsilon);
  sync_target();
}

void DqnTrainer::sync_target() { target_ = copy_to_target(net_); }

MoveAction DqnTrainer::choose(GridState s, double eps) {
  return select_action(net_, s, eps, exploration_rng_);
}

double DqnTrainer::learn(std::span<const Experience> batch) {
  const auto y = compute_td_targets(target_, batch, env_.gamma());
  std::vector<SampleInput> inputs;
  inputs.reserve(batch.size());
  for (const auto& e : batch) inputs.push_back({e.s, e.a});
  LossGradient lg = td_loss_and_gradient(net_, y, inputs);
  apply_gradient(lg.gradient);
  return lg.loss;
}

PolicySnapshot DqnTrainer::snapshot() const { return snapshot_policy(net_); }

std::unique_ptr<Trainer> make_trainer(const AgentConfig& cfg, const EnvLayout& layout) {
  if (cfg.kind == AgentKind::Dqn) return std::make_unique<DqnTrainer>(cfg, layout);
  return std::make_unique<DistributionalTrainer>(cfg, layout);
}

}  // namespace rsdrl
