#include "rsdrl/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "rsdrl/random.hpp"

namespace rsdrl {

ActionScore utility_score(const RiskParams& p) {
  return [p](const ReturnDistribution& d) { return utility(d, p); };
}

TabularDistributionTable::TabularDistributionTable(const SupportGrid& grid)
    : grid_(grid),
      entries_(kNumStates * kNumActions, ReturnDistribution::point_mass(grid, 0.0)) {}

double TabularDistributionTable::sup_distance(const TabularDistributionTable& other) const {
  double sup = 0.0;
  for (std::size_t e = 0; e < entries_.size(); ++e) {
    const auto a = entries_[e].cdf();
    const auto b = other.entries_[e].cdf();
    for (std::size_t k = 0; k < a.size(); ++k) sup = std::max(sup, std::abs(a[k] - b[k]));
  }
  return sup;
}

PolicyTable greedy_policy(const TabularDistributionTable& table, const ActionScore& score) {
  PolicyTable policy{};
  for (int s = 0; s < kNumStates; ++s) {
    const GridState state = GridState::from_index(s);
    MoveAction best = MoveAction::Right;
    double best_score = -std::numeric_limits<double>::infinity();
    for (MoveAction a : kAllActions) {
      const double v = score(table.at(state, a));
      if (v > best_score) {
        best_score = v;
        best = a;
      }
    }
    policy[static_cast<std::size_t>(s)] = best;
  }
  return policy;
}

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

struct CellReward {
  std::vector<double> masses;
  std::size_t first = 0;
  std::size_t last = 0;  // inclusive
  bool empty = true;
};

std::vector<double> discretize_weighted(const RewardLaw& law, const SupportGrid& grid,
                                        double total) {
  const auto n = static_cast<std::size_t>(grid.n_z);
  std::vector<double> cdf(n, 0.0);
  const double f_lo = normal_cdf(-5.0);
  const double f_span = normal_cdf(5.0) - f_lo;
  for (const auto& c : law) {
    const double lo = c.mu - 5.0 * c.sigma;
    const double hi = c.mu + 5.0 * c.sigma;
    for (std::size_t k = 0; k < n; ++k) {
      const double z = std::clamp(grid.point(static_cast<int>(k)), lo, hi);
      cdf[k] += c.weight * (normal_cdf((z - c.mu) / c.sigma) - f_lo) / f_span;
    }
  }
  cdf.back() = total;
  std::vector<double> masses(n);
  double prev = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    masses[k] = std::max(0.0, cdf[k] - prev);
    prev = std::max(prev, cdf[k]);
  }
  return masses;
}

CellReward make_cell_reward(const RewardLaw& law, const SupportGrid& grid) {
  CellReward r;
  double total = 0.0;
  for (const auto& c : law) total += c.weight;
  if (law.empty() || total <= 0.0) return r;
  r.masses = discretize_weighted(law, grid, total);
  const auto nz = [](double m) { return m != 0.0; };
  r.first = static_cast<std::size_t>(std::find_if(r.masses.begin(), r.masses.end(), nz) -
                                     r.masses.begin());
  r.last = r.masses.size() - 1 -
           static_cast<std::size_t>(std::find_if(r.masses.rbegin(), r.masses.rend(), nz) -
                                    r.masses.rbegin());
  r.empty = false;
  return r;
}

// Everything one backup needs, precomputed once per call.
struct BackupContext {
  const EnvLayout* layout;
  SupportGrid grid;
  std::vector<double> loc;
  // Per cell: reward masses of outcomes that end the episode and of those that do not.
  std::array<CellReward, kNumStates> ending;
  std::array<CellReward, kNumStates> continuing;

  BackupContext(const EnvLayout& l, const SupportGrid& g) : layout(&l), grid(g) {
    loc.resize(static_cast<std::size_t>(grid.n_z));
    for (int k = 0; k < grid.n_z; ++k) loc[static_cast<std::size_t>(k)] = grid.mass_location(k);
    for (int s = 0; s < kNumStates; ++s) {
      const GridState cell = GridState::from_index(s);
      const RewardLaw& law = reward_law_at(*layout, cell);
      RewardLaw end_part, cont_part;
      for (const auto& c : law) {
        const bool ends = terminal_kind_at(*layout, cell) != TerminalKind::None && c.ends_episode;
        (ends ? end_part : cont_part).push_back(c);
      }
      ending[static_cast<std::size_t>(s)] = make_cell_reward(end_part, grid);
      continuing[static_cast<std::size_t>(s)] = make_cell_reward(cont_part, grid);
    }
  }

  // Linear split of mass `m` at value v onto the (non-uniform) mass lattice.
  void project(double v, double m, std::vector<double>& out) const {
    const std::size_t n = loc.size();
    const double dz = grid.spacing();
    if (v <= loc[0]) {
      out[0] += m;
      return;
    }
    if (v >= loc[n - 1]) {
      out[n - 1] += m;
      return;
    }
    std::size_t k;
    double w;
    if (v < loc[1]) {
      k = 0;
      w = (v - loc[0]) / (loc[1] - loc[0]);
    } else {
      const double pos = (v - loc[1]) / dz + 1.0;
      k = std::min(static_cast<std::size_t>(pos), n - 2);
      w = pos - static_cast<double>(k);
    }
    out[k] += m * (1.0 - w);
    out[k + 1] += m * w;
  }

  ReturnDistribution backup_pair(const TabularDistributionTable& table, const PolicyTable& policy,
                                 GridState s, MoveAction a) const {
    const double gamma = layout->gamma;
    std::vector<double> out(loc.size(), 0.0);
    for (const auto& branch : transition_branches(*layout, s, a)) {
      const auto cell = static_cast<std::size_t>(branch.next.index());
      const CellReward& end = ending[cell];
      if (!end.empty) {
        for (std::size_t i = end.first; i <= end.last; ++i) {
          out[i] += branch.probability * end.masses[i];
        }
      }
      const CellReward& r = continuing[cell];
      if (r.empty) continue;
      const auto succ =
          table.at(branch.next, policy[static_cast<std::size_t>(branch.next.index())]).masses();
      for (std::size_t i = r.first; i <= r.last; ++i) {
        const double mi = branch.probability * r.masses[i];
        if (mi == 0.0) continue;
        for (std::size_t j = 0; j < succ.size(); ++j) {
          if (succ[j] <= 0.0) continue;
          project(loc[i] + gamma * loc[j], mi * succ[j], out);
        }
      }
    }
    return ReturnDistribution::from_masses(grid, out);
  }
};

}  // namespace

std::vector<double> discretize_reward(const RewardLaw& law, const SupportGrid& grid) {
  return discretize_weighted(law, grid, 1.0);
}

TabularDistributionTable bellman_backup(const EnvLayout& layout,
                                        const TabularDistributionTable& table,
                                        const PolicyTable& policy) {
  const BackupContext ctx(layout, table.grid());
  std::vector<ReturnDistribution> entries(kNumStates * kNumActions);
  const long n = kNumStates * kNumActions;
#pragma omp parallel for schedule(dynamic)
  for (long e = 0; e < n; ++e) {
    const GridState s = GridState::from_index(static_cast<int>(e) / kNumActions);
    const MoveAction a = action_from_index(static_cast<int>(e) % kNumActions);
    entries[static_cast<std::size_t>(e)] = ctx.backup_pair(table, policy, s, a);
  }
  TabularDistributionTable out(table.grid());
  for (long e = 0; e < n; ++e) {
    out.set(GridState::from_index(static_cast<int>(e) / kNumActions),
            action_from_index(static_cast<int>(e) % kNumActions),
            std::move(entries[static_cast<std::size_t>(e)]));
  }
  return out;
}

namespace serial {
TabularDistributionTable bellman_backup(const EnvLayout& layout,
                                        const TabularDistributionTable& table,
                                        const PolicyTable& policy) {
  const BackupContext ctx(layout, table.grid());
  TabularDistributionTable out(table.grid());
  for (int s = 0; s < kNumStates; ++s) {
    for (MoveAction a : kAllActions) {
      const GridState state = GridState::from_index(s);
      out.set(state, a, ctx.backup_pair(table, policy, state, a));
    }
  }
  return out;
}
}  // namespace serial

OracleResult distributional_value_iteration(const EnvLayout& layout, const ActionScore& score,
                                            const SupportGrid& grid, int iterations) {
  grid.validate();
  OracleResult result;
  result.table = TabularDistributionTable(grid);
  for (int it = 0; it < iterations; ++it) {
    const PolicyTable policy = greedy_policy(result.table, score);
    TabularDistributionTable next = bellman_backup(layout, result.table, policy);
    result.final_change = next.sup_distance(result.table);
    result.table = std::move(next);
    result.iterations = it + 1;
    if (result.final_change < kOracleTolerance) {
      result.converged = true;
      break;
    }
  }
  result.policy = greedy_policy(result.table, score);
  return result;
}

OracleResult distributional_value_iteration(EnvKind kind, const RiskParams& p,
                                            const SupportGrid& grid, int iterations) {
  p.validate();
  return distributional_value_iteration(layout_for(kind), utility_score(p), grid, iterations);
}

std::vector<GridState> reachable_states(const EnvLayout& layout, const PolicyTable& policy) {
  std::array<bool, kNumStates> seen{};
  std::vector<GridState> out;
  std::deque<GridState> queue{layout.start};
  seen[static_cast<std::size_t>(layout.start.index())] = true;
  while (!queue.empty()) {
    const GridState s = queue.front();
    queue.pop_front();
    out.push_back(s);
    for (const auto& b : transition_branches(layout, s, policy[static_cast<std::size_t>(s.index())])) {
      if (b.probability <= 0.0 || seen[static_cast<std::size_t>(b.next.index())]) continue;
      if (continue_probability(layout, b.next) <= 0.0) continue;
      seen[static_cast<std::size_t>(b.next.index())] = true;
      queue.push_back(b.next);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

void RiskConstraint::validate() const {
  if (!(eps_threshold >= 0.0 && eps_threshold <= 1.0)) {
    throw std::invalid_argument("constraint: eps_threshold must lie in [0, 1]");
  }
}

EpisodeResult run_episode(const PolicyTable& policy, GridWorld& env,
                          std::optional<MoveAction> first_action, int cap) {
  EpisodeResult r;
  std::vector<GridState> states{env.reset()};
  double discount = 1.0;
  for (int t = 0; t < cap; ++t) {
    const MoveAction a = (t == 0 && first_action)
                             ? *first_action
                             : policy[static_cast<std::size_t>(env.state().index())];
    const StepOutcome out = env.step(a);
    r.undiscounted += out.reward;
    r.discounted += discount * out.reward;
    discount *= env.gamma();
    states.push_back(out.next_state);
    r.length = t + 1;
    if (out.terminal) break;
  }
  r.rs = classify_trajectory(env.layout(), states, kEvaluationHorizon);
  return r;
}

namespace {
constexpr long kEpisodesPerChunk = 1000;
}

std::vector<EpisodeResult> rollout_episodes(const PolicyTable& policy, const EnvLayout& layout,
                                            long n_episodes, std::uint64_t seed,
                                            std::optional<MoveAction> first_action) {
  std::vector<EpisodeResult> results(static_cast<std::size_t>(n_episodes));
  const long chunks = (n_episodes + kEpisodesPerChunk - 1) / kEpisodesPerChunk;
#pragma omp parallel for schedule(dynamic)
  for (long c = 0; c < chunks; ++c) {
    GridWorld env(layout, derive_seed(seed, StreamId::Evaluation, static_cast<std::uint64_t>(c)));
    const long end = std::min(n_episodes, (c + 1) * kEpisodesPerChunk);
    for (long e = c * kEpisodesPerChunk; e < end; ++e) {
      results[static_cast<std::size_t>(e)] = run_episode(policy, env, first_action);
    }
  }
  return results;
}

namespace serial {
std::vector<EpisodeResult> rollout_episodes(const PolicyTable& policy, const EnvLayout& layout,
                                            long n_episodes, std::uint64_t seed,
                                            std::optional<MoveAction> first_action) {
  std::vector<EpisodeResult> results;
  results.reserve(static_cast<std::size_t>(n_episodes));
  const long chunks = (n_episodes + kEpisodesPerChunk - 1) / kEpisodesPerChunk;
  for (long c = 0; c < chunks; ++c) {
    GridWorld env(layout, derive_seed(seed, StreamId::Evaluation, static_cast<std::uint64_t>(c)));
    const long end = std::min(n_episodes, (c + 1) * kEpisodesPerChunk);
    for (long e = c * kEpisodesPerChunk; e < end; ++e) {
      results.push_back(run_episode(policy, env, first_action));
    }
  }
  return results;
}
}  // namespace serial

EvalReport summarize_episodes(std::span<const EpisodeResult> episodes, const RiskParams& p,
                              const RiskConstraint& constraint, const SupportGrid& grid) {
  if (episodes.empty()) throw std::invalid_argument("summarize_episodes: no episodes");
  EvalReport report;
  report.risk_params = p;
  report.constraint = constraint;
  report.episodes = static_cast<long>(episodes.size());
  const double n = static_cast<double>(episodes.size());

  std::vector<double> returns;
  returns.reserve(episodes.size());
  double sum = 0.0, sum_sq = 0.0, rs_sum = 0.0, rs_sq = 0.0;
  long below = 0;
  for (const auto& e : episodes) {
    returns.push_back(e.undiscounted);
    sum += e.undiscounted;
    sum_sq += e.undiscounted * e.undiscounted;
    rs_sum += e.rs;
    rs_sq += static_cast<double>(e.rs) * e.rs;
    if (e.undiscounted <= constraint.r_min) ++below;
  }
  report.mean = sum / n;
  report.mean_rs = rs_sum / n;
  const double var = std::max(0.0, sum_sq / n - report.mean * report.mean);
  const double rs_var = std::max(0.0, rs_sq / n - report.mean_rs * report.mean_rs);
  report.mean_half_width = 1.96 * std::sqrt(var / n);
  report.rs_half_width = 1.96 * std::sqrt(rs_var / n);

  const auto sampled = from_samples(returns, grid);
  report.clipped = sampled.clipped;
  report.risk = risk(sampled.distribution, p);
  report.utility = p.alpha * report.mean + (1.0 - p.alpha) * report.risk;
  report.constraint_probability = static_cast<double>(below) / n;
  report.constraint_satisfied = report.constraint_probability <= constraint.eps_threshold;
  return report;
}

EvalReport mc_evaluate(const PolicyTable& policy, const EnvLayout& layout, long n_episodes,
                       const RiskParams& p, const RiskConstraint& constraint, std::uint64_t seed,
                       const SupportGrid& grid) {
  if (n_episodes < 1) throw std::invalid_argument("mc_evaluate: n_episodes must be >= 1");
  p.validate();
  constraint.validate();
  const auto episodes = rollout_episodes(policy, layout, n_episodes, seed);
  return summarize_episodes(episodes, p, constraint, grid);
}

double mean_risk_sensitivity(const PolicyTable& policy, const EnvLayout& layout, long n_episodes,
                             std::uint64_t seed) {
  const auto episodes = rollout_episodes(policy, layout, n_episodes, seed);
  double sum = 0.0;
  for (const auto& e : episodes) sum += e.rs;
  return sum / static_cast<double>(episodes.size());
}

}  // namespace rsdrl
