#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include "rsdrl/oracle.hpp"

namespace rsdrl {
namespace {

RiskParams with_alpha(double alpha) {
  RiskParams p;
  p.alpha = alpha;
  return p;
}

const OracleResult& oracle(EnvKind kind, double alpha) {
  static std::map<std::pair<int, double>, OracleResult> cache;
  const auto key = std::make_pair(static_cast<int>(kind), alpha);
  auto it = cache.find(key);
  if (it == cache.end()) {
    it = cache.emplace(key, distributional_value_iteration(kind, with_alpha(alpha))).first;
  }
  return it->second;
}

MoveAction start_action(const OracleResult& r, EnvKind kind) {
  return r.policy[static_cast<std::size_t>(layout_for(kind).start.index())];
}

TEST(DiscretizeReward, MassesSumToOneAndKeepTheMean) {
  const SupportGrid g;
  for (const RewardLaw& law : {RewardLaw{{1.0, 0.3, 0.1}}, RewardLaw{{0.75, 1.0, 0.1}, {0.25, -1.0, 0.1}},
                               RewardLaw{{1.0, -0.2, 0.1}}}) {
    const auto m = discretize_reward(law, g);
    ASSERT_EQ(m.size(), static_cast<std::size_t>(g.n_z));
    EXPECT_NEAR(std::accumulate(m.begin(), m.end(), 0.0), 1.0, 1e-12);
    double law_mean = 0.0;
    for (const auto& c : law) law_mean += c.weight * c.mu;
    EXPECT_NEAR(expectation(ReturnDistribution::from_masses(g, m)), law_mean, 1e-3);
  }
}

TEST(DiscretizeReward, TailsLandOnTheEdgeCells) {
  const SupportGrid g;
  const auto below = discretize_reward({{1.0, -3.0, 0.1}}, g);
  EXPECT_NEAR(below.front(), 1.0, 1e-12);
  const auto above = discretize_reward({{1.0, 3.0, 0.1}}, g);
  EXPECT_NEAR(above.back(), 1.0, 1e-12);
}

TEST(Oracle, TerminalAdjacentEntryIsTheDiscretizedReward) {
  const auto& r = oracle(EnvKind::RiskyRewards, 0.5);
  const SupportGrid g;
  const auto law = layout_for(EnvKind::RiskyRewards).orange_reward;
  const auto expected = ReturnDistribution::from_masses(g, discretize_reward(law, g));
  const auto& got = r.table.at({2, 1}, MoveAction::Up);
  for (int k = 0; k < g.n_z; ++k) EXPECT_NEAR(got[k], expected[k], 1e-12) << k;
}

TEST(Oracle, RiskyRewardsPolicyFollowsAlpha) {
  const EnvLayout& l = layout_for(EnvKind::RiskyRewards);
  EXPECT_EQ(start_action(oracle(EnvKind::RiskyRewards, 1.0), EnvKind::RiskyRewards),
            l.orange_first_action);
  EXPECT_EQ(start_action(oracle(EnvKind::RiskyRewards, 0.5), EnvKind::RiskyRewards),
            l.green_first_action);
  EXPECT_EQ(start_action(oracle(EnvKind::RiskyRewards, 0.0), EnvKind::RiskyRewards),
            l.green_first_action);
}

TEST(Oracle, DiscountedOrangeValueMatchesHandComputation) {
  const double gamma = 0.9;
  const double hand = 0.5 * gamma * gamma - 0.1 - 0.1 * gamma;  // 0.215
  const auto& r = oracle(EnvKind::RiskyRewards, 1.0);
  EXPECT_NEAR(expectation(r.table.at({1, 0}, MoveAction::Right)), hand, 0.01);
}

TEST(Oracle, ConvergesAndIsSelfConsistent) {
  for (EnvKind k : kAllEnvKinds) {
    const auto& r = oracle(k, 0.5);
    EXPECT_TRUE(r.converged) << to_string(k);
    EXPECT_LE(r.final_change, kOracleTolerance);
    const auto again = bellman_backup(layout_for(k), r.table, r.policy);
    EXPECT_LE(again.sup_distance(r.table), 1e-6) << to_string(k);
  }
}

TEST(Oracle, EntriesAreValidDistributions) {
  for (EnvKind k : kAllEnvKinds) {
    const auto& r = oracle(k, 0.5);
    for (int s = 0; s < kNumStates; ++s) {
      for (MoveAction a : kAllActions) {
        const auto cdf = r.table.at(GridState::from_index(s), a).cdf();
        for (std::size_t i = 0; i < cdf.size(); ++i) {
          ASSERT_GE(cdf[i], 0.0);
          ASSERT_LE(cdf[i], 1.0 + 1e-12);
          if (i > 0) {
            ASSERT_LE(cdf[i - 1], cdf[i] + 1e-15);
          }
        }
        EXPECT_NEAR(cdf.back(), 1.0, 1e-6);
      }
    }
  }
}

TEST(Oracle, ParallelBackupMatchesSerial) {
  for (EnvKind k : kAllEnvKinds) {
    const auto& r = oracle(k, 0.5);
    const auto a = bellman_backup(layout_for(k), r.table, r.policy);
    const auto b = serial::bellman_backup(layout_for(k), r.table, r.policy);
    EXPECT_EQ(a.sup_distance(b), 0.0) << to_string(k);
  }
}

TEST(Oracle, LayoutSeparatesExpectationFromRisk) {
  const RiskParams p;
  for (EnvKind k : kAllEnvKinds) {
    const EnvLayout& l = layout_for(k);
    const auto& r = oracle(k, 0.5);
    const auto& green = r.table.at(l.start, l.green_first_action);
    const auto& orange = r.table.at(l.start, l.orange_first_action);
    const auto& neutral = oracle(k, 1.0);
    EXPECT_GT(expectation(neutral.table.at(l.start, l.orange_first_action)),
              expectation(neutral.table.at(l.start, l.green_first_action)))
        << to_string(k);
    EXPECT_GT(value_at_risk(green, p.rho), value_at_risk(orange, p.rho)) << to_string(k);
  }
}

TEST(Oracle, AlphaSweepSwitchesRouteAtMostOnce) {
  for (EnvKind k : kAllEnvKinds) {
    const EnvLayout& l = layout_for(k);
    std::vector<int> route;
    for (double alpha : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      const MoveAction a = start_action(oracle(k, alpha), k);
      route.push_back(a == l.green_first_action ? +1 : a == l.orange_first_action ? -1 : 0);
    }
    int switches = 0;
    for (std::size_t i = 1; i < route.size(); ++i) switches += route[i] != route[i - 1] ? 1 : 0;
    EXPECT_LE(switches, 1) << to_string(k);
    EXPECT_EQ(route.front(), +1) << to_string(k);
  }
}

TEST(Oracle, AlphaZeroIsVarGreedy) {
  const RiskParams p = with_alpha(0.0);
  const ActionScore var_score = [&](const ReturnDistribution& d) {
    return value_at_risk(d, p.rho);
  };
  for (EnvKind k : kAllEnvKinds) {
    const auto a = distributional_value_iteration(k, p);
    const auto b = distributional_value_iteration(layout_for(k), var_score);
    EXPECT_EQ(a.policy, b.policy) << to_string(k);
  }
}

TEST(Oracle, ReachableStatesOfTheGreenRoute) {
  const auto& r = oracle(EnvKind::RiskyRewards, 0.5);
  auto states = reachable_states(layout_for(EnvKind::RiskyRewards), r.policy);
  std::sort(states.begin(), states.end(),
            [](GridState a, GridState b) { return a.index() < b.index(); });
  EXPECT_EQ(states, (std::vector<GridState>{{0, 0}, {1, 0}, {0, 1}}));
}

TEST(Oracle, MatchesMonteCarloAtTheStart) {
  const SupportGrid g;
  const RiskParams p;
  const long n = 100000;
  for (EnvKind k : kAllEnvKinds) {
    const auto& r = oracle(k, 0.5);
    const EnvLayout& l = layout_for(k);
    const auto episodes = rollout_episodes(r.policy, l, n, 5);
    std::vector<double> s(episodes.size());
    std::transform(episodes.begin(), episodes.end(), s.begin(),
                   [](const EpisodeResult& e) { return e.discounted; });
    const double mean = std::accumulate(s.begin(), s.end(), 0.0) / n;
    double var = 0.0;
    for (double v : s) var += (v - mean) * (v - mean);
    const double se = std::sqrt(var / (n - 1) / n);

    const auto& z = r.table.at(l.start, r.policy[static_cast<std::size_t>(l.start.index())]);
    EXPECT_NEAR(expectation(z), mean, 2 * g.spacing() + 3 * se) << to_string(k);

    // Order-statistic band around the empirical rho-quantile.
    std::sort(s.begin(), s.end());
    const double centre = p.rho * n;
    const double spread = 3.0 * std::sqrt(n * p.rho * (1.0 - p.rho));
    const double lo = s[static_cast<std::size_t>(centre - spread)];
    const double hi = s[static_cast<std::size_t>(centre + spread)];
    const double oracle_var = value_at_risk(z, p.rho);
    EXPECT_GE(oracle_var, lo - 2 * g.spacing()) << to_string(k);
    EXPECT_LE(oracle_var, hi + 2 * g.spacing()) << to_string(k);
  }
}

// ---------------------------------------------------------------------------

TEST(MonteCarlo, RouteMeansOnRiskyRewards) {
  const EnvLayout& l = layout_for(EnvKind::RiskyRewards);
  const RiskParams p;
  const auto orange = mc_evaluate(oracle(EnvKind::RiskyRewards, 1.0).policy, l, 100000, p, {}, 1);
  EXPECT_NEAR(orange.mean, 0.3, 0.02);
  EXPECT_NEAR(orange.mean_rs, -1.0, 1e-12);
  const auto green = mc_evaluate(oracle(EnvKind::RiskyRewards, 0.5).policy, l, 100000, p, {}, 1);
  EXPECT_NEAR(green.mean, 0.1, 0.02);
  EXPECT_NEAR(green.mean_rs, 1.0, 1e-12);
  EXPECT_GT(green.utility, orange.utility);
  EXPECT_NEAR(green.utility, p.alpha * green.mean + (1 - p.alpha) * green.risk, 1e-12);
}

TEST(MonteCarlo, SafePolicySatisfiesTheConstraint) {
  const RiskConstraint c{-1.0, 0.1};
  const auto r = mc_evaluate(oracle(EnvKind::RiskyRewards, 0.5).policy,
                             layout_for(EnvKind::RiskyRewards), 20000, RiskParams{}, c, 2);
  EXPECT_EQ(r.constraint_probability, 0.0);
  EXPECT_TRUE(r.constraint_satisfied);
}

TEST(MonteCarlo, ConstraintIsInclusive) {
  std::vector<EpisodeResult> eps(10, EpisodeResult{1.0, 1.0, 1, 3});
  eps[0].undiscounted = -0.5;
  const RiskConstraint c{-0.5, 0.1};
  auto r = summarize_episodes(eps, RiskParams{}, c);
  EXPECT_DOUBLE_EQ(r.constraint_probability, 0.1);
  EXPECT_TRUE(r.constraint_satisfied);
  eps[1].undiscounted = -0.5;
  r = summarize_episodes(eps, RiskParams{}, c);
  EXPECT_FALSE(r.constraint_satisfied);
}

TEST(MonteCarlo, HalfWidthsUseTheNormalApproximation) {
  std::vector<EpisodeResult> eps;
  for (int i = 0; i < 400; ++i) eps.push_back({i % 2 == 0 ? 1.0 : -1.0, 0.0, i % 2 == 0 ? 1 : -1, 3});
  const auto r = summarize_episodes(eps, RiskParams{}, {});
  EXPECT_EQ(r.episodes, 400);
  // Unit standard deviation over 400 episodes.
  EXPECT_NEAR(r.mean_half_width, 1.96 / 20.0, 1e-9);
  EXPECT_NEAR(r.rs_half_width, 1.96 / 20.0, 1e-9);
}

TEST(MonteCarlo, RolloutsIndependentOfThreading) {
  const auto& r = oracle(EnvKind::RiskyTransitions, 0.5);
  const auto a = rollout_episodes(r.policy, layout_for(EnvKind::RiskyTransitions), 5000, 9);
  const auto b = serial::rollout_episodes(r.policy, layout_for(EnvKind::RiskyTransitions), 5000, 9);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].undiscounted, b[i].undiscounted);
    ASSERT_EQ(a[i].rs, b[i].rs);
  }
}

}  // namespace
}  // namespace rsdrl
