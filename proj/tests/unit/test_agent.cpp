#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "rsdrl/agent.hpp"

namespace rsdrl {
namespace {

AgentConfig quick_config(AgentKind kind, std::uint64_t seed) {
  AgentConfig c;
  c.kind = kind;
  c.seed = seed;
  c.hidden = {32, 32};
  c.grid = SupportGrid{-2.0, 2.0, 50};
  c.eval_every = 200;
  c.eval_episodes = 20;
  c.warmup = 100;
  c.target_update = 200;
  return c;
}

std::vector<double> step_cdf(const SupportGrid& g, double at) {
  std::vector<double> cdf(static_cast<std::size_t>(g.n_z));
  for (int k = 0; k < g.n_z; ++k) cdf[static_cast<std::size_t>(k)] = g.point(k) >= at ? 1.0 : 0.0;
  return cdf;
}

void randomize(std::span<double> params, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  for (auto& p : params) p = n(rng);
}

// ---------------------------------------------------------------------------

TEST(EpsilonSchedule, LinearDecay) {
  const AgentConfig c;
  EXPECT_DOUBLE_EQ(epsilon_at(0, c), 1.0);
  EXPECT_NEAR(epsilon_at(5000, c), 0.505, 1e-12);
  EXPECT_DOUBLE_EQ(epsilon_at(10000, c), 0.01);
  EXPECT_DOUBLE_EQ(epsilon_at(40000, c), 0.01);
  EXPECT_THROW(epsilon_at(-1, c), std::invalid_argument);
}

TEST(EpsilonSchedule, ExponentialStaysAboveFloor) {
  AgentConfig c;
  c.epsilon_schedule = EpsilonSchedule::Exponential;
  EXPECT_DOUBLE_EQ(epsilon_at(0, c), 1.0);
  double prev = 1.0;
  for (long s = 500; s <= 20000; s += 500) {
    const double e = epsilon_at(s, c);
    EXPECT_LE(e, prev);
    EXPECT_GT(e, 0.01);
    prev = e;
  }
  EXPECT_NEAR(epsilon_at(10000, c), 0.01 + 0.99 * std::exp(-5.0), 1e-12);
}

TEST(ReplayMemory, EvictsOldestFirst) {
  ReplayMemory m(5);
  for (int i = 0; i < 7; ++i) m.push({{0, 0}, MoveAction::Up, static_cast<double>(i), {0, 1}, false});
  EXPECT_EQ(m.size(), 5u);
  EXPECT_EQ(m.capacity(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(m.at(i).r, static_cast<double>(i + 2));
  EXPECT_THROW(m.at(5), std::out_of_range);
}

TEST(ReplayMemory, SamplesOnlyStoredExperiences) {
  ReplayMemory m(10);
  EXPECT_THROW(m.sample(1, *std::make_unique<std::mt19937_64>(1)), std::logic_error);
  for (int i = 0; i < 3; ++i) m.push({{0, 0}, MoveAction::Up, static_cast<double>(i), {0, 1}, false});
  std::mt19937_64 rng(2);
  std::vector<int> hits(3);
  for (const auto& e : m.sample(3000, rng)) ++hits[static_cast<std::size_t>(e.r)];
  for (int h : hits) EXPECT_NEAR(h, 1000, 100);
}

TEST(SelectAction, FullExplorationIsUniform) {
  CdfNetwork net(SupportGrid{-2.0, 2.0, 20}, {8});
  net.initialize(1);
  std::mt19937_64 rng(3);
  const int n = 10000;
  std::array<int, kNumActions> counts{};
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(to_index(select_action(net, {1, 0}, {}, 1.0, rng)))];
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - n / 4.0) * (c - n / 4.0) / (n / 4.0);
  EXPECT_LT(chi2, 16.27);  // chi-square, 3 dof, p = 0.001
}

TEST(SelectAction, AlphaOneMatchesExpectationGreedy) {
  const SupportGrid g{-2.0, 2.0, 30};
  CdfNetwork net(g, {8, 8});
  net.initialize(2);
  std::mt19937_64 draw(4), rng_a(5), rng_b(5);
  RiskParams p;
  p.alpha = 1.0;
  for (int i = 0; i < 100; ++i) {
    randomize(net.params(), draw, 1.0);
    const GridState s = GridState::from_index(i % kNumStates);
    const auto cdfs = net.atom_cdfs(s);
    MoveAction best = MoveAction::Right;
    double best_e = -1e300;
    for (MoveAction a : kAllActions) {
      const double e = expectation(g, cdfs[static_cast<std::size_t>(to_index(a))]);
      if (e > best_e) {
        best_e = e;
        best = a;
      }
    }
    EXPECT_EQ(select_action(net, s, p, 0.0, rng_a), best);
    EXPECT_EQ(select_action(net, s, p, 0.0, rng_b, ActionCriterion::Expectation), best);
  }
}

TEST(GreedyAction, PrefersTheSafeDeltaOverTheRiskyMixture) {
  const SupportGrid g;
  const RiskParams p;  // alpha 0.5, rho 0.1, VaR
  const auto a = step_cdf(g, 0.5);
  auto b = step_cdf(g, 1.0);
  const auto low = step_cdf(g, -1.0);
  for (std::size_t k = 0; k < b.size(); ++k) b[k] = 0.75 * b[k] + 0.25 * low[k];

  EXPECT_NEAR(utility(g, a, p), 0.5, 0.02);
  EXPECT_NEAR(utility(g, b, p), 0.5 * 0.5 + 0.5 * -1.0, 0.02);
  std::array<std::vector<double>, kNumActions> cdfs = {b, a, b, b};
  EXPECT_EQ(greedy_action(g, cdfs, p), MoveAction::Down);
  // Risk neutral, the mixture wins.
  EXPECT_EQ(greedy_action(g, cdfs, p, ActionCriterion::Expectation), MoveAction::Right);
}

TEST(GreedyAction, TiesGoToTheLowestIndex) {
  const SupportGrid g{-2.0, 2.0, 40};
  const auto c = step_cdf(g, 0.0);
  EXPECT_EQ(greedy_action(g, {c, c, c, c}, RiskParams{}), MoveAction::Right);
}

// ---------------------------------------------------------------------------

TEST(Targets, TerminalIsAUnitStepAtTheReward) {
  const SupportGrid g;
  CdfNetwork net(g, {8});
  net.initialize(6);
  const TargetModel target(net, RiskParams{});
  const std::vector<Experience> batch = {{{0, 1}, MoveAction::Up, 1.0, {0, 2}, true}};
  const auto z = g.points();
  const Matrix y = compute_targets(target, batch, z, 0.9);
  for (std::size_t k = 0; k < z.size(); ++k) EXPECT_EQ(y(0, k), z[k] < 1.0 ? 0.0 : 1.0) << z[k];
}

TEST(Targets, NonTerminalQueriesTheShiftedGreedyCdf) {
  const SupportGrid g;
  CdfNetwork net(g, {16});
  net.initialize(7);
  const RiskParams p;
  const TargetModel target(net, p);
  const GridState next{1, 1};
  const std::vector<Experience> batch = {{{1, 0}, MoveAction::Up, -0.1, next, false}};
  const std::vector<double> z = {0.8};
  const Matrix y = compute_targets(target, batch, z, 0.9);
  const MoveAction a = greedy_action(g, net.atom_cdfs(next), p);
  EXPECT_EQ(target.greedy(next), a);
  EXPECT_NEAR(y(0, 0), net.forward_cdf(next, a, (0.8 + 0.1) / 0.9), 1e-12);
}

TEST(Targets, AlphaOneTargetActionIsExpectationGreedy) {
  const SupportGrid g{-2.0, 2.0, 30};
  CdfNetwork net(g, {8, 8});
  net.initialize(8);
  std::mt19937_64 rng(9);
  RiskParams p;
  p.alpha = 1.0;
  for (int i = 0; i < 100; ++i) {
    randomize(net.params(), rng, 1.0);
    const TargetModel target(net, p);
    const TargetModel neutral(net, RiskParams{}, ActionCriterion::Expectation);
    for (int s = 0; s < kNumStates; ++s) {
      ASSERT_EQ(target.greedy(GridState::from_index(s)), neutral.greedy(GridState::from_index(s)));
    }
  }
}

TEST(Targets, RowsAreValidCdfs) {
  const SupportGrid g{-2.0, 2.0, 40};
  CdfNetwork net(g, {8, 8});
  net.initialize(10);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> r(0.0, 1.0);
  std::uniform_real_distribution<double> zu(-3.0, 3.0);
  for (int inst = 0; inst < 1000; ++inst) {
    if (inst % 10 == 0) randomize(net.params(), rng, 1.0);
    const TargetModel target(net, RiskParams{});
    std::vector<Experience> batch(4);
    for (auto& e : batch) {
      e.s = GridState::from_index(static_cast<int>(rng() % kNumStates));
      e.a = action_from_index(static_cast<int>(rng() % kNumActions));
      e.s_next = GridState::from_index(static_cast<int>(rng() % kNumStates));
      e.r = r(rng);
      e.terminal = rng() % 4 == 0;
    }
    std::vector<double> z(25);
    for (auto& v : z) v = zu(rng);
    std::sort(z.begin(), z.end());
    const Matrix y = compute_targets(target, batch, z, 0.9);
    for (std::size_t i = 0; i < y.rows; ++i) {
      for (std::size_t k = 0; k < y.cols; ++k) {
        ASSERT_GE(y(i, k), 0.0);
        ASSERT_LE(y(i, k), 1.0);
        if (k > 0) {
          ASSERT_LE(y(i, k - 1), y(i, k));
        }
      }
    }
  }
}

TEST(Targets, TdTargetIsBellmanBackup) {
  QNetwork q({8});
  q.initialize(12);
  const std::vector<Experience> batch = {{{1, 0}, MoveAction::Up, -0.2, {1, 1}, false},
                                         {{0, 1}, MoveAction::Up, 0.3, {0, 2}, true}};
  const auto y = compute_td_targets(q, batch, 0.9);
  const auto next = q.q_values({1, 1});
  EXPECT_NEAR(y[0], -0.2 + 0.9 * *std::max_element(next.begin(), next.end()), 1e-12);
  EXPECT_EQ(y[1], 0.3);
}

// ---------------------------------------------------------------------------

TEST(Trainer, WarmupReportsNoLoss) {
  auto c = quick_config(AgentKind::RiskSensitive, 1);
  c.warmup = 50;
  auto t = make_trainer(c, layout_for(EnvKind::RiskyRewards));
  const auto metrics = t->train(80);
  for (const auto& m : metrics) {
    if (m.step < c.warmup) {
      EXPECT_FALSE(m.loss.has_value()) << m.step;
    } else {
      EXPECT_TRUE(m.loss.has_value()) << m.step;
    }
  }
  EXPECT_EQ(t->memory().size(), 80u);
}

TEST(Trainer, EpisodeBookkeeping) {
  auto t = make_trainer(quick_config(AgentKind::Dqn, 2), layout_for(EnvKind::RiskyRewards));
  int episodes = 0;
  for (const auto& m : t->train(2000)) {
    EXPECT_EQ(m.episode_return.has_value(), m.episode_length.has_value());
    if (m.episode_length) {
      ++episodes;
      EXPECT_GE(*m.episode_length, 1);
      EXPECT_LE(*m.episode_length, kTrainingEpisodeCap);
    }
  }
  EXPECT_GT(episodes, 20);
}

void expect_same_streams(const std::vector<StepMetrics>& a, const std::vector<StepMetrics>& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].action, b[i].action) << i;
    ASSERT_EQ(a[i].loss, b[i].loss) << i;
    ASSERT_EQ(a[i].episode_return, b[i].episode_return) << i;
    ASSERT_EQ(a[i].rs, b[i].rs) << i;
  }
}

TEST(Trainer, SameSeedSameStream) {
  for (AgentKind kind : {AgentKind::RiskSensitive, AgentKind::Dqn}) {
    const auto c = quick_config(kind, 3);
    auto a = make_trainer(c, layout_for(EnvKind::RiskyTransitions));
    auto b = make_trainer(c, layout_for(EnvKind::RiskyTransitions));
    expect_same_streams(a->train(1500), b->train(1500));
    EXPECT_TRUE(std::equal(a->params().begin(), a->params().end(), b->params().begin()));
  }
}

TEST(Trainer, DifferentSeedsDiverge) {
  auto a = make_trainer(quick_config(AgentKind::RiskSensitive, 4), layout_for(EnvKind::RiskyRewards));
  auto b = make_trainer(quick_config(AgentKind::RiskSensitive, 5), layout_for(EnvKind::RiskyRewards));
  a->train(300);
  b->train(300);
  EXPECT_FALSE(std::equal(a->params().begin(), a->params().end(), b->params().begin()));
}

TEST(Trainer, AlphaOneLoopIsExpectationGreedyStepForStep) {
  AgentConfig u;
  u.seed = 6;
  u.risk.alpha = 1.0;
  AgentConfig e = u;
  e.criterion = ActionCriterion::Expectation;
  auto a = make_trainer(u, layout_for(EnvKind::RiskyRewards));
  auto b = make_trainer(e, layout_for(EnvKind::RiskyRewards));
  expect_same_streams(a->train(1000), b->train(1000));
}

TEST(Trainer, SnapshotIsFrozen) {
  auto t = make_trainer(quick_config(AgentKind::RiskSensitive, 7), layout_for(EnvKind::RiskyRewards));
  t->train(300);
  const PolicySnapshot snap = t->snapshot();
  const PolicyTable table = snap.table();
  const std::vector<double> params(snap.params().begin(), snap.params().end());
  t->train(300);
  EXPECT_EQ(snap.table(), table);
  EXPECT_TRUE(std::equal(params.begin(), params.end(), snap.params().begin()));
  EXPECT_FALSE(std::equal(params.begin(), params.end(), t->params().begin()));
}

TEST(Trainer, AlphaOneSnapshotIsExpectationGreedy) {
  auto c = quick_config(AgentKind::RiskSensitive, 8);
  c.risk.alpha = 1.0;
  auto t = make_trainer(c, layout_for(EnvKind::RiskyRewards));
  t->train(500);
  const auto& net = dynamic_cast<const DistributionalTrainer&>(*t).network();
  EXPECT_EQ(t->snapshot().table(),
            snapshot_policy(net, RiskParams{}, ActionCriterion::Expectation).table());
}

TEST(Trainer, LoadParamsRoundTrip) {
  auto a = make_trainer(quick_config(AgentKind::RiskSensitive, 9), layout_for(EnvKind::RiskyRewards));
  auto b = make_trainer(quick_config(AgentKind::RiskSensitive, 10), layout_for(EnvKind::RiskyRewards));
  a->train(300);
  b->load_params(a->params());
  EXPECT_EQ(a->snapshot().table(), b->snapshot().table());
  EXPECT_THROW(b->load_params(std::vector<double>(3, 0.0)), std::invalid_argument);
}

TEST(Trainer, DqnSettlesOnZeroRewardStub) {
  EnvLayout stub = layout_for(EnvKind::RiskyRewards);
  const RewardLaw zero = {{1.0, 0.0, 1e-12}};
  stub.step_reward = stub.green_reward = stub.orange_reward = zero;
  AgentConfig c;
  c.kind = AgentKind::Dqn;
  c.seed = 11;
  c.eval_every = 0;
  auto t = make_trainer(c, stub);
  t->train(10000);
  const auto& q = dynamic_cast<const DqnTrainer&>(*t).network();
  for (int s = 0; s < kNumStates; ++s) {
    for (double v : q.q_values(GridState::from_index(s))) EXPECT_LT(std::abs(v), 0.05) << s;
  }
}

TEST(AgentConfig, ValidationNamesTheField) {
  auto expect_field = [](AgentConfig c, const char* field) {
    try {
      c.validate();
      FAIL() << "expected rejection of " << field;
    } catch (const std::invalid_argument& e) {
      EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
    }
  };
  AgentConfig c;
  c.batch_size = 0;
  expect_field(c, "batch_size");
  c = {};
  c.epsilon_final = 0.5;
  c.epsilon_initial = 0.2;
  expect_field(c, "epsilon_final");
  c = {};
  c.hidden = {};
  expect_field(c, "hidden");
  c = {};
  c.risk.rho = 1.5;
  expect_field(c, "rho");
  EXPECT_NO_THROW(AgentConfig{}.validate());
}

TEST(AgentNames, RoundTrip) {
  EXPECT_EQ(parse_agent_kind(to_string(AgentKind::Dqn)), AgentKind::Dqn);
  EXPECT_EQ(parse_agent_kind("rs"), AgentKind::RiskSensitive);
  EXPECT_EQ(parse_z_sampling("uniform"), ZSampling::Uniform);
  EXPECT_EQ(parse_epsilon_schedule("exponential"), EpsilonSchedule::Exponential);
  EXPECT_THROW(parse_agent_kind("ppo"), std::invalid_argument);
}

}  // namespace
}  // namespace rsdrl
