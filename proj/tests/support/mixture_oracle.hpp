#pragma once

#include <cmath>
#include <vector>

namespace rsdrl::testing_support {

// Analytic 75/25 Gaussian mixture, inverted by bisection. Shares no code with
// the library.
struct MixtureOracle {
  struct Part {
    double w, mu, sigma;
  };
  std::vector<Part> parts = {{0.75, 1.0, 0.1}, {0.25, -1.0, 0.1}};

  static double phi(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }
  static double Phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

  double cdf(double z) const {
    double s = 0.0;
    for (const auto& p : parts) s += p.w * Phi((z - p.mu) / p.sigma);
    return s;
  }
  double mean() const {
    double s = 0.0;
    for (const auto& p : parts) s += p.w * p.mu;
    return s;
  }
  double var(double rho) const {
    double lo = -5.0, hi = 5.0;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      (cdf(mid) < rho ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }
  // E[Z | Z <= VaR] from the truncated-normal partial means.
  double cvar(double rho) const {
    const double v = var(rho);
    double s = 0.0;
    for (const auto& p : parts) {
      const double t = (v - p.mu) / p.sigma;
      s += p.w * (p.mu * Phi(t) - p.sigma * phi(t));
    }
    return s / cdf(v);
  }
};

}  // namespace rsdrl::testing_support
