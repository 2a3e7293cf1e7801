#include "rsdrl/grid_world.hpp"

#include <algorithm>

#include "rsdrl/random.hpp"

namespace rsdrl {

namespace {

EnvLayout make_risky_rewards() {
  EnvLayout l;
  l.kind = EnvKind::RiskyRewards;
  l.start = {1, 0};
  l.green_cell = {0, 2};
  l.orange_cell = {2, 2};
  l.wind_prob = 0.0;
  l.step_reward = {{1.0, -0.1, 0.1}};
  l.green_reward = {{1.0, 0.3, 0.1}};
  l.orange_reward = {{0.75, 1.0, 0.1}, {0.25, -1.0, 0.1}};
  l.green_first_action = MoveAction::Left;
  l.orange_first_action = MoveAction::Right;
  return l;
}

EnvLayout make_risky_transitions() {
  EnvLayout l;
  l.kind = EnvKind::RiskyTransitions;
  l.start = {1, 0};
  l.green_cell = {0, 2};
  l.orange_cell = {2, 0};
  l.wind_prob = 0.5;
  l.step_reward = {{1.0, -0.3, 0.1}};
  l.green_reward = {{1.0, 1.0, 0.1}};
  l.orange_reward = {{1.0, 1.0, 0.1}};
  l.green_first_action = MoveAction::Up;
  l.orange_first_action = MoveAction::Right;
  return l;
}

EnvLayout make_risky_grid_world() {
  EnvLayout l;
  l.kind = EnvKind::RiskyGridWorld;
  l.start = {1, 0};
  l.green_cell = {1, 2};
  l.orange_cell = {1, 1};
  l.orange_kind = TerminalKind::Trap;
  l.wind_prob = 0.25;
  l.step_reward = {{1.0, -0.2, 0.1}};
  l.green_reward = {{1.0, 1.0, 0.1}};
  // The trap sits on the shortest path and is crossed, not ended on.
  l.orange_reward = {{0.75, -0.2, 0.1, false}, {0.25, -2.0, 0.1, false}};
  l.green_first_action = MoveAction::Left;
  l.orange_first_action = MoveAction::Up;
  return l;
}

}  // namespace

std::string_view to_string(MoveAction a) {
  switch (a) {
    case MoveAction::Right: return "RIGHT";
    case MoveAction::Down: return "DOWN";
    case MoveAction::Left: return "LEFT";
    case MoveAction::Up: return "UP";
  }
  return "?";
}

std::string_view to_string(EnvKind kind) {
  switch (kind) {
    case EnvKind::RiskyRewards: return "risky-rewards";
    case EnvKind::RiskyTransitions: return "risky-transitions";
    case EnvKind::RiskyGridWorld: return "risky-grid-world";
  }
  return "?";
}

EnvKind parse_env_kind(std::string_view name) {
  for (EnvKind k : kAllEnvKinds) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown environment '" + std::string(name) +
                              "' (expected risky-rewards, risky-transitions or risky-grid-world)");
}

const EnvLayout& layout_for(EnvKind kind) {
  static const EnvLayout rewards = make_risky_rewards();
  static const EnvLayout transitions = make_risky_transitions();
  static const EnvLayout grid = make_risky_grid_world();
  switch (kind) {
    case EnvKind::RiskyRewards: return rewards;
    case EnvKind::RiskyTransitions: return transitions;
    case EnvKind::RiskyGridWorld: return grid;
  }
  throw std::invalid_argument("invalid EnvKind");
}

TerminalKind terminal_kind_at(const EnvLayout& layout, GridState cell) {
  if (cell == layout.green_cell) return layout.green_kind;
  if (cell == layout.orange_cell) return layout.orange_kind;
  return TerminalKind::None;
}

const RewardLaw& reward_law_at(const EnvLayout& layout, GridState cell) {
  if (cell == layout.green_cell) return layout.green_reward;
  if (cell == layout.orange_cell) return layout.orange_reward;
  return layout.step_reward;
}

GridState apply_move(GridState s, MoveAction a) {
  switch (a) {
    case MoveAction::Right: s.x += 1; break;
    case MoveAction::Down: s.y -= 1; break;
    case MoveAction::Left: s.x -= 1; break;
    case MoveAction::Up: s.y += 1; break;
  }
  s.x = std::clamp(s.x, 0, kGridSize - 1);
  s.y = std::clamp(s.y, 0, kGridSize - 1);
  return s;
}

std::vector<TransitionBranch> transition_branches(const EnvLayout& layout, GridState s,
                                                  MoveAction a) {
  const GridState moved = apply_move(s, a);
  if (layout.wind_prob <= 0.0) return {{1.0, moved, false}};
  return {{1.0 - layout.wind_prob, moved, false},
          {layout.wind_prob, apply_move(moved, MoveAction::Left), true}};
}

GridWorld::GridWorld(EnvKind kind, std::uint64_t seed) : GridWorld(layout_for(kind), seed) {}

GridWorld::GridWorld(EnvLayout layout, std::uint64_t seed)
    : layout_(std::move(layout)),
      transition_rng_(make_stream(seed, StreamId::EnvTransitions)),
      reward_rng_(make_stream(seed, StreamId::EnvRewards)),
      state_(layout_.start) {}

GridState GridWorld::reset() {
  state_ = layout_.start;
  terminal_ = false;
  steps_ = 0;
  return state_;
}

double continue_probability(const EnvLayout& layout, GridState cell) {
  if (terminal_kind_at(layout, cell) == TerminalKind::None) return 1.0;
  double p = 0.0;
  for (const auto& c : reward_law_at(layout, cell)) {
    if (!c.ends_episode) p += c.weight;
  }
  return p;
}

GridWorld::RewardDraw GridWorld::draw_reward(GridState cell) {
  const RewardLaw& law = reward_law_at(layout_, cell);
  const GaussianComponent* comp = &law.front();
  if (law.size() > 1) {
    double u = std::uniform_real_distribution<double>(0.0, 1.0)(reward_rng_);
    for (const auto& c : law) {
      comp = &c;
      if (u < c.weight) break;
      u -= c.weight;
    }
  }
  RewardDraw d;
  d.value = std::normal_distribution<double>(comp->mu, comp->sigma)(reward_rng_);
  d.ends_episode = terminal_kind_at(layout_, cell) != TerminalKind::None && comp->ends_episode;
  return d;
}

StepOutcome GridWorld::step(MoveAction a) {
  if (terminal_) {
    throw ContractViolation("step() called on a terminal environment; call reset() first");
  }
  StepOutcome out;
  GridState next = apply_move(state_, a);
  if (layout_.wind_prob > 0.0) {
    out.wind = std::bernoulli_distribution(layout_.wind_prob)(transition_rng_);
    if (out.wind) next = apply_move(next, MoveAction::Left);
  }
  out.next_state = next;
  const RewardDraw draw = draw_reward(next);
  out.reward = draw.value;
  out.terminal = draw.ends_episode;
  out.terminal_kind = out.terminal ? terminal_kind_at(layout_, next) : TerminalKind::None;

  state_ = next;
  terminal_ = out.terminal;
  ++steps_;
  return out;
}

int classify_trajectory(EnvKind kind, std::span<const GridState> states, int horizon) {
  return classify_trajectory(layout_for(kind), states, horizon);
}

int classify_trajectory(const EnvLayout& layout, std::span<const GridState> states, int horizon) {
  const auto last = std::min<std::size_t>(states.size(), static_cast<std::size_t>(horizon) + 1);
  for (std::size_t t = 0; t < last; ++t) {
    switch (terminal_kind_at(layout, states[t])) {
      case TerminalKind::None: break;
      case TerminalKind::GreenObjective: return +1;
      case TerminalKind::OrangeObjective:
      case TerminalKind::Trap: return -1;
    }
  }
  return 0;
}

}  // namespace rsdrl
