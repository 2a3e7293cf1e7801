#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "rsdrl/agent.hpp"

namespace rsdrl {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Trained parameters plus everything needed to rebuild the network.
///
/// Text layout, one `key value...` pair per line:
///
///     rsdrl-checkpoint 1
///     agent rs
///     env risky-rewards
///     hidden 128 128
///     activation softplus
///     grid -2 2 200
///     risk var 0.1 0.5
///     criterion utility
///     seed 1
///     step 50000
///     params 52456
///     <one hex float per line>
struct Checkpoint {
  static constexpr int kVersion = 1;

  AgentKind agent = AgentKind::RiskSensitive;
  EnvKind env = EnvKind::RiskyRewards;
  std::vector<int> hidden = {128, 128};
  Activation activation = Activation::Softplus;
  SupportGrid grid;
  RiskParams risk;
  ActionCriterion criterion = ActionCriterion::Utility;
  std::uint64_t seed = 0;
  long step = 0;
  std::vector<double> params;

  /// Rebuilt networks; each throws CheckpointError on a kind or size mismatch.
  CdfNetwork cdf_network() const;
  QNetwork q_network() const;
  /// Greedy policy of the stored network.
  PolicySnapshot policy() const;
};

Checkpoint make_checkpoint(const Trainer& trainer);

void write_checkpoint(std::ostream& out, const Checkpoint& c);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rsdrl
