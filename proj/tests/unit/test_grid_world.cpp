#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "rsdrl/grid_world.hpp"

namespace rsdrl {
namespace {

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
};

Moments sample_moments(GridWorld& env, GridState cell, int n) {
  double s = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double r = env.sample_reward(cell);
    s += r;
    sq += r * r;
  }
  const double mean = s / n;
  return {mean, std::sqrt(sq / n - mean * mean)};
}

TEST(GridWorld, NamesRoundTrip) {
  for (EnvKind k : kAllEnvKinds) EXPECT_EQ(parse_env_kind(to_string(k)), k);
  EXPECT_EQ(to_string(EnvKind::RiskyGridWorld), "risky-grid-world");
  EXPECT_THROW(parse_env_kind("cliff"), std::invalid_argument);
}

TEST(GridWorld, StartStateAndDiscount) {
  for (EnvKind k : kAllEnvKinds) {
    GridWorld env(k, 42);
    EXPECT_EQ(env.reset(), (GridState{1, 0}));
    EXPECT_DOUBLE_EQ(env.gamma(), 0.9);
  }
}

TEST(GridWorld, LayoutInvariants) {
  const double winds[] = {0.0, 0.5, 0.25};
  for (EnvKind k : kAllEnvKinds) {
    const EnvLayout& l = layout_for(k);
    EXPECT_NE(l.start, l.green_cell);
    EXPECT_NE(l.start, l.orange_cell);
    EXPECT_NE(l.green_cell, l.orange_cell);
    EXPECT_DOUBLE_EQ(l.wind_prob, winds[static_cast<int>(k)]);
  }
}

TEST(GridWorld, ResetAfterTerminalReturnsToStart) {
  GridWorld env(EnvKind::RiskyRewards, 1);
  env.reset();
  for (MoveAction a : {MoveAction::Left, MoveAction::Up, MoveAction::Up}) env.step(a);
  EXPECT_TRUE(env.terminal());
  EXPECT_THROW(env.step(MoveAction::Up), ContractViolation);
  EXPECT_EQ(env.reset(), (GridState{1, 0}));
  EXPECT_EQ(env.steps(), 0);
  EXPECT_FALSE(env.terminal());
}

TEST(GridWorld, ResetDoesNotAdvanceStreams) {
  GridWorld a(EnvKind::RiskyTransitions, 5), b(EnvKind::RiskyTransitions, 5);
  a.reset();
  b.reset();
  b.reset();
  b.reset();
  for (int i = 0; i < 20; ++i) {
    const auto oa = a.step(MoveAction::Up);
    const auto ob = b.step(MoveAction::Up);
    EXPECT_EQ(oa.reward, ob.reward);
    EXPECT_EQ(oa.wind, ob.wind);
    if (oa.terminal) {
      a.reset();
      b.reset();
    }
  }
}

TEST(GridWorld, StepReturnsStepRewardOffObjectives) {
  GridWorld env(EnvKind::RiskyRewards, 3);
  env.reset();
  const auto out = env.step(MoveAction::Left);
  EXPECT_EQ(out.next_state, (GridState{0, 0}));
  EXPECT_FALSE(out.terminal);
  EXPECT_EQ(out.terminal_kind, TerminalKind::None);
  EXPECT_LT(std::abs(out.reward + 0.1), 0.6);
}

TEST(GridWorld, DoubleClipAtBorder) {
  // Moving LEFT from [0,0] and being blown LEFT again stays at [0,0].
  const auto branches = transition_branches(layout_for(EnvKind::RiskyTransitions), {0, 0},
                                            MoveAction::Left);
  ASSERT_EQ(branches.size(), 2u);
  for (const auto& b : branches) EXPECT_EQ(b.next, (GridState{0, 0}));
  EXPECT_TRUE(branches[1].wind);
  EXPECT_DOUBLE_EQ(branches[1].probability, 0.5);
}

TEST(GridWorld, TransitionsStayInBounds) {
  for (EnvKind k : kAllEnvKinds) {
    for (int i = 0; i < kNumStates; ++i) {
      for (MoveAction a : kAllActions) {
        double total = 0.0;
        for (const auto& b : transition_branches(layout_for(k), GridState::from_index(i), a)) {
          EXPECT_GE(b.next.x, 0);
          EXPECT_LT(b.next.x, kGridSize);
          EXPECT_GE(b.next.y, 0);
          EXPECT_LT(b.next.y, kGridSize);
          total += b.probability;
        }
        EXPECT_DOUBLE_EQ(total, 1.0);
      }
    }
  }
}

TEST(GridWorld, WindIsAppliedBeforeTerminality) {
  // RIGHT from the start reaches [2,0] only without wind.
  const auto branches =
      transition_branches(layout_for(EnvKind::RiskyTransitions), {1, 0}, MoveAction::Right);
  ASSERT_EQ(branches.size(), 2u);
  EXPECT_EQ(branches[0].next, (GridState{2, 0}));
  EXPECT_EQ(branches[1].next, (GridState{1, 0}));
}

TEST(GridWorld, EmpiricalWindFrequency) {
  for (EnvKind k : kAllEnvKinds) {
    GridWorld env(k, 77);
    const double p = layout_for(k).wind_prob;
    long winds = 0;
    const long n = 100000;
    env.reset();
    for (long i = 0; i < n; ++i) {
      // Moving DOWN from the bottom row never terminates.
      const auto out = env.step(MoveAction::Down);
      winds += out.wind ? 1 : 0;
      if (out.terminal) env.reset();
    }
    EXPECT_NEAR(static_cast<double>(winds) / n, p, 0.01) << to_string(k);
  }
}

TEST(GridWorld, RewardMomentsMatchLaws) {
  const int n = 1000000;
  {
    GridWorld env(EnvKind::RiskyRewards, 8);
    const auto step = sample_moments(env, {1, 1}, n);
    EXPECT_NEAR(step.mean, -0.1, 0.002);
    EXPECT_NEAR(step.sd, 0.1, 0.002);
    const auto green = sample_moments(env, {0, 2}, n);
    EXPECT_NEAR(green.mean, 0.3, 0.006);
    EXPECT_NEAR(green.sd, 0.1, 0.002);
    const auto orange = sample_moments(env, {2, 2}, n);
    EXPECT_NEAR(orange.mean, 0.5, 0.005);
    // sqrt(0.01 + 0.75 * 0.25 * 4)
    EXPECT_NEAR(orange.sd, std::sqrt(0.76), 0.02 * std::sqrt(0.76));
  }
  {
    GridWorld env(EnvKind::RiskyTransitions, 9);
    const auto step = sample_moments(env, {1, 1}, n);
    EXPECT_NEAR(step.mean, -0.3, 0.006);
    EXPECT_NEAR(step.sd, 0.1, 0.002);
  }
  {
    GridWorld env(EnvKind::RiskyGridWorld, 10);
    const auto trap = sample_moments(env, {1, 1}, n);
    EXPECT_NEAR(trap.mean, 0.75 * -0.2 + 0.25 * -2.0, 0.013);
  }
}

TEST(GridWorld, TrapIsCrossedNotEnded) {
  EXPECT_DOUBLE_EQ(continue_probability(layout_for(EnvKind::RiskyGridWorld), {1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(continue_probability(layout_for(EnvKind::RiskyGridWorld), {1, 2}), 0.0);
  EXPECT_DOUBLE_EQ(continue_probability(layout_for(EnvKind::RiskyRewards), {0, 0}), 1.0);

  GridWorld env(EnvKind::RiskyGridWorld, 4);
  for (int i = 0; i < 200; ++i) {
    env.reset();
    const auto out = env.step(MoveAction::Up);
    EXPECT_FALSE(out.terminal);
    EXPECT_EQ(out.terminal_kind, TerminalKind::None);
  }
}

TEST(GridWorld, TerminalKindIffTerminal) {
  for (EnvKind k : kAllEnvKinds) {
    GridWorld env(k, 21);
    std::mt19937_64 rng(1);
    env.reset();
    for (int i = 0; i < 5000; ++i) {
      const auto out = env.step(action_from_index(static_cast<int>(rng() % 4)));
      EXPECT_EQ(out.terminal, out.terminal_kind != TerminalKind::None);
      if (out.terminal) env.reset();
    }
  }
}

TEST(GridWorld, SeededDeterminism) {
  GridWorld a(EnvKind::RiskyGridWorld, 99), b(EnvKind::RiskyGridWorld, 99);
  std::mt19937_64 rng(2);
  a.reset();
  b.reset();
  for (int i = 0; i < 2000; ++i) {
    const MoveAction act = action_from_index(static_cast<int>(rng() % 4));
    const auto oa = a.step(act);
    const auto ob = b.step(act);
    ASSERT_EQ(oa.next_state, ob.next_state);
    ASSERT_EQ(oa.reward, ob.reward);
    ASSERT_EQ(oa.terminal, ob.terminal);
    if (oa.terminal) {
      a.reset();
      b.reset();
    }
  }
}

TEST(ClassifyTrajectory, Examples) {
  const std::vector<GridState> green = {{1, 0}, {0, 0}, {0, 1}, {0, 2}};
  EXPECT_EQ(classify_trajectory(EnvKind::RiskyRewards, green), +1);
  const std::vector<GridState> orange = {{1, 0}, {2, 0}, {2, 1}, {2, 2}};
  EXPECT_EQ(classify_trajectory(EnvKind::RiskyRewards, orange), -1);

  std::vector<GridState> idle(11, GridState{1, 0});
  EXPECT_EQ(classify_trajectory(EnvKind::RiskyTransitions, idle), 0);

  const std::vector<GridState> trap = {{1, 0}, {1, 1}, {1, 2}};
  EXPECT_EQ(classify_trajectory(EnvKind::RiskyGridWorld, trap), -1);
}

TEST(ClassifyTrajectory, OnlyTheHorizonCounts) {
  std::vector<GridState> late(11, GridState{0, 0});
  late.push_back({0, 2});
  EXPECT_EQ(classify_trajectory(EnvKind::RiskyRewards, late), 0);
  EXPECT_EQ(classify_trajectory(EnvKind::RiskyRewards, late, 11), +1);
}

TEST(ClassifyTrajectory, PartitionsRandomRollouts) {
  for (EnvKind k : kAllEnvKinds) {
    GridWorld env(k, 31);
    std::mt19937_64 rng(4);
    for (int e = 0; e < 500; ++e) {
      std::vector<GridState> states = {env.reset()};
      TerminalKind end = TerminalKind::None;
      for (int t = 0; t < kEvaluationHorizon; ++t) {
        const auto out = env.step(action_from_index(static_cast<int>(rng() % 4)));
        states.push_back(out.next_state);
        if (out.terminal) {
          end = out.terminal_kind;
          break;
        }
      }
      const int rs = classify_trajectory(k, states);
      EXPECT_TRUE(rs == -1 || rs == 0 || rs == 1);
      if (end == TerminalKind::GreenObjective && k != EnvKind::RiskyGridWorld) {
        EXPECT_EQ(rs, +1);
      }
      if (end == TerminalKind::OrangeObjective) {
        EXPECT_EQ(rs, -1);
      }
    }
  }
}

}  // namespace
}  // namespace rsdrl
