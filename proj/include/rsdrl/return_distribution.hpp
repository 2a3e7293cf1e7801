#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace rsdrl {

/// Uniform grid z_k = z_min + k (z_max - z_min) / (n_z - 1) on which return CDFs
/// are sampled.
struct SupportGrid {
  double z_min = -2.0;
  double z_max = 2.0;
  int n_z = 200;

  double spacing() const { return (z_max - z_min) / (n_z - 1); }
  double point(int k) const { return z_min + k * spacing(); }
  /// Location that carries the mass increment cdf[k] - cdf[k-1]: the left end
  /// for k = 0, the cell midpoint otherwise.
  double mass_location(int k) const { return k == 0 ? z_min : z_min + (k - 0.5) * spacing(); }
  std::vector<double> points() const;
  void validate() const;

  bool operator==(const SupportGrid&) const = default;
};

class InvalidDistribution : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// CDF of a random return sampled on a SupportGrid: cdf[k] = F(z_k).
///
/// Between grid points the CDF is read as piecewise linear, so each cell's
/// mass is spread uniformly over that cell. All statistics below are exact for
/// that reading.
class ReturnDistribution {
 public:
  static constexpr double kTolerance = 1e-6;

  ReturnDistribution() = default;
  /// Validates monotonicity, range and cdf.back() == 1 within kTolerance.
  ReturnDistribution(SupportGrid grid, std::vector<double> cdf);

  static ReturnDistribution point_mass(const SupportGrid& grid, double value);
  /// Uniform law on [lo, hi] (clamped to the grid).
  static ReturnDistribution uniform(const SupportGrid& grid, double lo, double hi);
  /// Builds the CDF from masses at SupportGrid::mass_location().
  static ReturnDistribution from_masses(const SupportGrid& grid, std::span<const double> masses);

  const SupportGrid& grid() const { return grid_; }
  std::span<const double> cdf() const { return cdf_; }
  double operator[](int k) const { return cdf_[static_cast<std::size_t>(k)]; }
  int size() const { return static_cast<int>(cdf_.size()); }

  /// Piecewise-linear evaluation at an arbitrary z.
  double evaluate(double z) const;
  std::vector<double> masses() const;

 private:
  SupportGrid grid_;
  std::vector<double> cdf_;
};

enum class RiskMeasure { VaR, CVaR };

std::string_view to_string(RiskMeasure m);
RiskMeasure parse_risk_measure(std::string_view name);

struct RiskParams {
  RiskMeasure measure = RiskMeasure::VaR;
  double rho = 0.10;
  double alpha = 0.5;

  void validate() const;
};

// Span-level kernels. `cdf` must have grid.n_z entries.
double expectation(const SupportGrid& grid, std::span<const double> cdf);
double value_at_risk(const SupportGrid& grid, std::span<const double> cdf, double rho);

struct CvarResult {
  double value = 0.0;
  /// Tail mass below the VaR cell was under 1e-9, so value == VaR.
  bool degenerate = false;
};
CvarResult conditional_value_at_risk(const SupportGrid& grid, std::span<const double> cdf,
                                     double rho);
double risk(const SupportGrid& grid, std::span<const double> cdf, const RiskParams& p);
double utility(const SupportGrid& grid, std::span<const double> cdf, const RiskParams& p);

inline double expectation(const ReturnDistribution& d) { return expectation(d.grid(), d.cdf()); }
inline double value_at_risk(const ReturnDistribution& d, double rho) {
  return value_at_risk(d.grid(), d.cdf(), rho);
}
inline CvarResult conditional_value_at_risk(const ReturnDistribution& d, double rho) {
  return conditional_value_at_risk(d.grid(), d.cdf(), rho);
}
inline double risk(const ReturnDistribution& d, const RiskParams& p) {
  return risk(d.grid(), d.cdf(), p);
}
inline double utility(const ReturnDistribution& d, const RiskParams& p) {
  return utility(d.grid(), d.cdf(), p);
}

/// Minibatch Cramer loss: sum_i sqrt(sum_z (targets[i][z] - predictions[i][z])^2).
/// Both arguments are row-major n_e x n_z.
double cramer_distance_sq_sum(std::span<const double> targets, std::span<const double> predictions,
                              std::size_t n_z);

/// L2 (Cramer) distance between two CDFs on the same grid, with the grid
/// spacing as quadrature weight: sqrt(dz * sum_k (F_k - G_k)^2).
double cramer_distance(const ReturnDistribution& a, const ReturnDistribution& b);

struct SampledDistribution {
  ReturnDistribution distribution;
  std::size_t clipped = 0;
};

/// Empirical CDF at the grid points. Samples outside [z_min, z_max] are
/// clamped to the bounds and counted in `clipped`.
SampledDistribution from_samples(std::span<const double> samples, const SupportGrid& grid);

}  // namespace rsdrl
