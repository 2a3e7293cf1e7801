#include <gtest/gtest.h>

#include <sstream>

#include "rsdrl/checkpoint.hpp"

namespace rsdrl {
namespace {

AgentConfig small(AgentKind kind) {
  AgentConfig c;
  c.kind = kind;
  c.seed = 4;
  c.hidden = {12, 6};
  c.grid = SupportGrid{-2.0, 2.0, 25};
  c.eval_every = 0;
  c.warmup = 50;
  return c;
}

std::string serialize(const Checkpoint& c) {
  std::ostringstream out;
  write_checkpoint(out, c);
  return out.str();
}

Checkpoint parse(const std::string& text) {
  std::istringstream in(text);
  return read_checkpoint(in);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  for (AgentKind kind : {AgentKind::RiskSensitive, AgentKind::Dqn}) {
    auto t = make_trainer(small(kind), layout_for(EnvKind::RiskyTransitions));
    t->train(200);
    const Checkpoint c = make_checkpoint(*t);
    const Checkpoint back = parse(serialize(c));
    EXPECT_EQ(back.agent, kind);
    EXPECT_EQ(back.env, EnvKind::RiskyTransitions);
    EXPECT_EQ(back.hidden, (std::vector<int>{12, 6}));
    EXPECT_EQ(back.grid, c.grid);
    EXPECT_EQ(back.risk.alpha, c.risk.alpha);
    EXPECT_EQ(back.seed, 4u);
    EXPECT_EQ(back.step, 200);
    ASSERT_EQ(back.params.size(), c.params.size());
    for (std::size_t i = 0; i < c.params.size(); ++i) ASSERT_EQ(back.params[i], c.params[i]);
    EXPECT_EQ(back.policy().table(), t->snapshot().table());
    EXPECT_EQ(serialize(back), serialize(c));
  }
}

TEST(Checkpoint, RestoresTheNetwork) {
  auto t = make_trainer(small(AgentKind::RiskSensitive), layout_for(EnvKind::RiskyRewards));
  t->train(150);
  const CdfNetwork net = parse(serialize(make_checkpoint(*t))).cdf_network();
  const auto& live = dynamic_cast<const DistributionalTrainer&>(*t).network();
  for (int s = 0; s < kNumStates; ++s) {
    EXPECT_EQ(net.atom_cdfs(GridState::from_index(s)), live.atom_cdfs(GridState::from_index(s)));
  }
}

TEST(Checkpoint, WrongNetworkKindThrows) {
  auto t = make_trainer(small(AgentKind::Dqn), layout_for(EnvKind::RiskyRewards));
  const Checkpoint c = make_checkpoint(*t);
  EXPECT_THROW(c.cdf_network(), CheckpointError);
  EXPECT_NO_THROW(c.q_network());
}

TEST(Checkpoint, MalformedInputIsNamed) {
  auto t = make_trainer(small(AgentKind::RiskSensitive), layout_for(EnvKind::RiskyRewards));
  const std::string good = serialize(make_checkpoint(*t));

  auto expect_error = [](const std::string& text, const std::string& needle) {
    try {
      parse(text);
      FAIL() << "expected CheckpointError mentioning " << needle;
    } catch (const CheckpointError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_error("", "rsdrl-checkpoint");
  expect_error("rsdrl-checkpoint 2\n", "version");

  std::string bad_env = good;
  bad_env.replace(bad_env.find("risky-rewards"), 13, "risky-nothing");
  expect_error(bad_env, "env");

  expect_error(good.substr(0, good.size() / 2), "param");
  expect_error(good + "0x1p+0\n", "trailing");
}

TEST(Checkpoint, MissingFileThrows) {
  EXPECT_THROW(load_checkpoint("/nonexistent/checkpoint.txt"), CheckpointError);
}

}  // namespace
}  // namespace rsdrl
