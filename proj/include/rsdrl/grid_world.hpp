#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rsdrl {

inline constexpr int kGridSize = 3;
inline constexpr int kNumStates = kGridSize * kGridSize;
inline constexpr int kNumActions = 4;

/// Agent coordinates: x grows rightward, y grows upward.
struct GridState {
  int x = 0;
  int y = 0;

  constexpr int index() const { return y * kGridSize + x; }
  static constexpr GridState from_index(int i) { return {i % kGridSize, i / kGridSize}; }
  constexpr bool operator==(const GridState&) const = default;
};

/// Encoding order is fixed: RIGHT=0, DOWN=1, LEFT=2, UP=3.
enum class MoveAction : int { Right = 0, Down = 1, Left = 2, Up = 3 };

inline constexpr std::array<MoveAction, kNumActions> kAllActions = {
    MoveAction::Right, MoveAction::Down, MoveAction::Left, MoveAction::Up};

constexpr int to_index(MoveAction a) { return static_cast<int>(a); }
constexpr MoveAction action_from_index(int i) { return static_cast<MoveAction>(i); }
std::string_view to_string(MoveAction a);

enum class EnvKind { RiskyRewards, RiskyTransitions, RiskyGridWorld };

inline constexpr std::array<EnvKind, 3> kAllEnvKinds = {
    EnvKind::RiskyRewards, EnvKind::RiskyTransitions, EnvKind::RiskyGridWorld};

/// "risky-rewards", "risky-transitions", "risky-grid-world".
std::string_view to_string(EnvKind kind);
EnvKind parse_env_kind(std::string_view name);

enum class TerminalKind { None, GreenObjective, OrangeObjective, Trap };

struct GaussianComponent {
  double weight = 1.0;
  double mu = 0.0;
  double sigma = 0.1;
  /// Read on terminal cells only: false marks an outcome the agent survives,
  /// in which case the episode continues from that cell.
  bool ends_episode = true;
};

/// Reward law of one cell: a (possibly single-component) Gaussian mixture.
using RewardLaw = std::vector<GaussianComponent>;

struct EnvLayout {
  EnvKind kind = EnvKind::RiskyRewards;
  GridState start;
  GridState green_cell;
  GridState orange_cell;
  TerminalKind green_kind = TerminalKind::GreenObjective;
  TerminalKind orange_kind = TerminalKind::OrangeObjective;
  double wind_prob = 0.0;
  RewardLaw step_reward;
  RewardLaw green_reward;
  RewardLaw orange_reward;
  double gamma = 0.9;
  MoveAction green_first_action = MoveAction::Left;
  MoveAction orange_first_action = MoveAction::Right;
};

const EnvLayout& layout_for(EnvKind kind);

TerminalKind terminal_kind_at(const EnvLayout& layout, GridState cell);
const RewardLaw& reward_law_at(const EnvLayout& layout, GridState cell);

/// Probability that entering `cell` does not end the episode (1 off terminal cells).
double continue_probability(const EnvLayout& layout, GridState cell);

/// Moves one cell in direction `a`; crossing a border leaves the coordinate unchanged.
GridState apply_move(GridState s, MoveAction a);

/// All (probability, cell) outcomes of the composite move + wind transition.
struct TransitionBranch {
  double probability;
  GridState next;
  bool wind;
};
std::vector<TransitionBranch> transition_branches(const EnvLayout& layout, GridState s,
                                                  MoveAction a);

struct StepOutcome {
  GridState next_state;
  double reward = 0.0;
  bool terminal = false;
  TerminalKind terminal_kind = TerminalKind::None;
  bool wind = false;
};

class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Seeded simulator for one of the three benchmark MDPs.
///
/// Wind draws and reward draws come from two independent streams derived from
/// the seed. reset() touches neither stream.
class GridWorld {
 public:
  GridWorld(EnvKind kind, std::uint64_t seed);
  GridWorld(EnvLayout layout, std::uint64_t seed);

  GridState reset();
  StepOutcome step(MoveAction a);

  EnvKind kind() const { return layout_.kind; }
  const EnvLayout& layout() const { return layout_; }
  double gamma() const { return layout_.gamma; }
  GridState state() const { return state_; }
  bool terminal() const { return terminal_; }
  int steps() const { return steps_; }

  struct RewardDraw {
    double value = 0.0;
    bool ends_episode = false;
  };
  /// Draws the reward for entering `cell` and whether that outcome is terminal.
  RewardDraw draw_reward(GridState cell);
  double sample_reward(GridState cell) { return draw_reward(cell).value; }

 private:
  EnvLayout layout_;
  std::mt19937_64 transition_rng_;
  std::mt19937_64 reward_rng_;
  GridState state_;
  bool terminal_ = false;
  int steps_ = 0;
};

inline constexpr int kEvaluationHorizon = 10;
inline constexpr int kTrainingEpisodeCap = 50;

/// R_s score of one rollout. `states[0]` is the initial state and `states[t]`
/// the state reached after t moves. Only the first `horizon` moves count.
/// Returns +1 (green route), -1 (orange route) or 0 (nothing reached). The
/// first special cell visited decides, so crossing the trap scores -1.
int classify_trajectory(EnvKind kind, std::span<const GridState> states,
                        int horizon = kEvaluationHorizon);
int classify_trajectory(const EnvLayout& layout, std::span<const GridState> states,
                        int horizon = kEvaluationHorizon);

}  // namespace rsdrl
