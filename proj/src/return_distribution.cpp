#include "rsdrl/return_distribution.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace rsdrl {

std::vector<double> SupportGrid::points() const {
  std::vector<double> z(static_cast<std::size_t>(n_z));
  for (int k = 0; k < n_z; ++k) z[static_cast<std::size_t>(k)] = point(k);
  return z;
}

void SupportGrid::validate() const {
  if (!(z_min < z_max)) throw std::invalid_argument("support grid: z_min must be < z_max");
  if (n_z < 2) throw std::invalid_argument("support grid: n_z must be >= 2");
}

ReturnDistribution::ReturnDistribution(SupportGrid grid, std::vector<double> cdf)
    : grid_(grid), cdf_(std::move(cdf)) {
  grid_.validate();
  if (cdf_.size() != static_cast<std::size_t>(grid_.n_z)) {
    throw InvalidDistribution("cdf has " + std::to_string(cdf_.size()) + " entries, grid has " +
                              std::to_string(grid_.n_z));
  }
  constexpr double slack = 1e-12;
  double prev = 0.0;
  for (std::size_t k = 0; k < cdf_.size(); ++k) {
    const double v = cdf_[k];
    if (!std::isfinite(v) || v < -slack || v > 1.0 + slack) {
      throw InvalidDistribution("cdf[" + std::to_string(k) + "] = " + std::to_string(v) +
                                " is outside [0, 1]");
    }
    if (v < prev - slack) {
      throw InvalidDistribution("cdf decreases at index " + std::to_string(k));
    }
    prev = v;
  }
  if (std::abs(cdf_.back() - 1.0) > kTolerance) {
    throw InvalidDistribution("cdf does not reach 1 at z_max (last value " +
                              std::to_string(cdf_.back()) + ")");
  }
}

ReturnDistribution ReturnDistribution::point_mass(const SupportGrid& grid, double value) {
  std::vector<double> cdf(static_cast<std::size_t>(grid.n_z));
  for (int k = 0; k < grid.n_z; ++k) {
    cdf[static_cast<std::size_t>(k)] = grid.point(k) >= value ? 1.0 : 0.0;
  }
  cdf.back() = 1.0;
  return {grid, std::move(cdf)};
}

ReturnDistribution ReturnDistribution::uniform(const SupportGrid& grid, double lo, double hi) {
  std::vector<double> cdf(static_cast<std::size_t>(grid.n_z));
  for (int k = 0; k < grid.n_z; ++k) {
    cdf[static_cast<std::size_t>(k)] = std::clamp((grid.point(k) - lo) / (hi - lo), 0.0, 1.0);
  }
  cdf.back() = 1.0;
  return {grid, std::move(cdf)};
}

ReturnDistribution ReturnDistribution::from_masses(const SupportGrid& grid,
                                                   std::span<const double> masses) {
  std::vector<double> cdf(masses.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < masses.size(); ++k) {
    acc += masses[k];
    cdf[k] = std::min(acc, 1.0);
  }
  return {grid, std::move(cdf)};
}

double ReturnDistribution::evaluate(double z) const {
  if (z < grid_.z_min) return 0.0;
  if (z >= grid_.z_max) return 1.0;
  const double pos = (z - grid_.z_min) / grid_.spacing();
  const auto k = std::min(static_cast<std::size_t>(pos), cdf_.size() - 2);
  const double w = pos - static_cast<double>(k);
  return (1.0 - w) * cdf_[k] + w * cdf_[k + 1];
}

std::vector<double> ReturnDistribution::masses() const {
  std::vector<double> m(cdf_.size());
  double prev = 0.0;
  for (std::size_t k = 0; k < cdf_.size(); ++k) {
    m[k] = cdf_[k] - prev;
    prev = cdf_[k];
  }
  return m;
}

std::string_view to_string(RiskMeasure m) { return m == RiskMeasure::VaR ? "var" : "cvar"; }

RiskMeasure parse_risk_measure(std::string_view name) {
  if (name == "var" || name == "VaR") return RiskMeasure::VaR;
  if (name == "cvar" || name == "CVaR") return RiskMeasure::CVaR;
  throw std::invalid_argument("unknown risk measure '" + std::string(name) +
                              "' (expected var or cvar)");
}

void RiskParams::validate() const {
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("risk: rho must lie in (0, 1)");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("risk: alpha must lie in [0, 1]");
}

double expectation(const SupportGrid& grid, std::span<const double> cdf) {
  double mean = 0.0;
  double prev = 0.0;
  for (std::size_t k = 0; k < cdf.size(); ++k) {
    mean += (cdf[k] - prev) * grid.mass_location(static_cast<int>(k));
    prev = cdf[k];
  }
  mean += (1.0 - prev) * grid.z_max;
  return mean;
}

namespace {

// Smallest k with cdf[k] >= rho, or n_z when the CDF never reaches rho.
std::size_t var_cell(std::span<const double> cdf, double rho) {
  return static_cast<std::size_t>(std::lower_bound(cdf.begin(), cdf.end(), rho) - cdf.begin());
}

double interpolate_var(const SupportGrid& grid, std::span<const double> cdf, std::size_t k,
                       double rho) {
  if (k == 0) return grid.z_min;
  if (k >= cdf.size()) return grid.z_max;
  const double lo = cdf[k - 1];
  const double hi = cdf[k];
  const double z0 = grid.point(static_cast<int>(k) - 1);
  if (hi <= lo) return grid.point(static_cast<int>(k));
  return z0 + (rho - lo) / (hi - lo) * grid.spacing();
}

}  // namespace

double value_at_risk(const SupportGrid& grid, std::span<const double> cdf, double rho) {
  return interpolate_var(grid, cdf, var_cell(cdf, rho), rho);
}

CvarResult conditional_value_at_risk(const SupportGrid& grid, std::span<const double> cdf,
                                     double rho) {
  const std::size_t k = var_cell(cdf, rho);
  const double var = interpolate_var(grid, cdf, k, rho);
  if (k == 0) return {var, true};
  if (k >= cdf.size()) return {expectation(grid, cdf), false};
  const double below = cdf[k - 1];
  if (below < 1e-9) return {var, true};

  double tail = 0.0;
  double prev = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    tail += (cdf[j] - prev) * grid.mass_location(static_cast<int>(j));
    prev = cdf[j];
  }
  // Partial cell: mass (rho - below) spread uniformly over [z_{k-1}, VaR].
  tail += (rho - below) * 0.5 * (grid.point(static_cast<int>(k) - 1) + var);
  return {tail / rho, false};
}

double risk(const SupportGrid& grid, std::span<const double> cdf, const RiskParams& p) {
  switch (p.measure) {
    case RiskMeasure::VaR: return value_at_risk(grid, cdf, p.rho);
    case RiskMeasure::CVaR: return conditional_value_at_risk(grid, cdf, p.rho).value;
  }
  return 0.0;
}

double utility(const SupportGrid& grid, std::span<const double> cdf, const RiskParams& p) {
  return p.alpha * expectation(grid, cdf) + (1.0 - p.alpha) * risk(grid, cdf, p);
}

double cramer_distance_sq_sum(std::span<const double> targets, std::span<const double> predictions,
                              std::size_t n_z) {
  if (targets.size() != predictions.size() || n_z == 0 || targets.size() % n_z != 0) {
    throw std::invalid_argument("cramer_distance_sq_sum: shape mismatch");
  }
  double loss = 0.0;
  for (std::size_t row = 0; row < targets.size(); row += n_z) {
    double sq = 0.0;
    for (std::size_t k = 0; k < n_z; ++k) {
      const double d = targets[row + k] - predictions[row + k];
      sq += d * d;
    }
    loss += std::sqrt(sq);
  }
  return loss;
}

double cramer_distance(const ReturnDistribution& a, const ReturnDistribution& b) {
  if (!(a.grid() == b.grid())) throw std::invalid_argument("cramer_distance: grid mismatch");
  double sq = 0.0;
  for (int k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    sq += d * d;
  }
  return std::sqrt(sq * a.grid().spacing());
}

SampledDistribution from_samples(std::span<const double> samples, const SupportGrid& grid) {
  if (samples.empty()) throw std::invalid_argument("from_samples: empty sample list");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::size_t clipped = 0;
  for (double& s : sorted) {
    if (s < grid.z_min || s > grid.z_max) {
      ++clipped;
      s = std::clamp(s, grid.z_min, grid.z_max);
    }
  }
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> cdf(static_cast<std::size_t>(grid.n_z));
  const double n = static_cast<double>(sorted.size());
  for (int k = 0; k < grid.n_z; ++k) {
    const auto count = std::upper_bound(sorted.begin(), sorted.end(), grid.point(k)) - sorted.begin();
    cdf[static_cast<std::size_t>(k)] = static_cast<double>(count) / n;
  }
  cdf.back() = 1.0;
  return {ReturnDistribution(grid, std::move(cdf)), clipped};
}

}  // namespace rsdrl
