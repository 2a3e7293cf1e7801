#include "rsdrl/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace rsdrl::kernels {

namespace {
// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelThreshold = 1 << 14;

// Four interleaved partial sums in a fixed order; shared by both kernel sets.
inline double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t c = 0;
  for (; c + 4 <= n; c += 4) {
    s0 += a[c] * b[c];
    s1 += a[c + 1] * b[c + 1];
    s2 += a[c + 2] * b[c + 2];
    s3 += a[c + 3] * b[c + 3];
  }
  for (; c < n; ++c) s0 += a[c] * b[c];
  return (s0 + s1) + (s2 + s3);
}

// gx[c] += sum_r W[r, c] gy[r] for c in [c0, c1), rows visited in order.
inline void transpose_times(const double* W, std::size_t in, std::span<const double> gy,
                            std::size_t c0, std::size_t c1, double* gx) {
  double acc[64];
  for (std::size_t b0 = c0; b0 < c1; b0 += 64) {
    const std::size_t b1 = std::min(c1, b0 + 64);
    const std::size_t n = b1 - b0;
    std::fill(acc, acc + n, 0.0);
    for (std::size_t r = 0; r < gy.size(); ++r) {
      const double g = gy[r];
      const double* w = W + r * in + b0;
      for (std::size_t j = 0; j < n; ++j) acc[j] += w[j] * g;
    }
    for (std::size_t j = 0; j < n; ++j) gx[b0 + j] += acc[j];
  }
}
inline void adam_range(double* __restrict p, double* __restrict m, double* __restrict v,
                       const double* __restrict g, std::size_t i0, std::size_t i1, double lr,
                       double beta1, double beta2, double eps, double c1, double c2) {
  for (std::size_t k = i0; k < i1; ++k) {
    m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
    v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
    p[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
  }
}
}  // namespace

void dense_forward(const double* W, const double* b, std::size_t in, std::span<const double> x,
                   std::span<double> y) {
  const auto rows = static_cast<long>(y.size());
  const double* xp = x.data();
#pragma omp parallel for schedule(static) if (y.size() * in >= kParallelThreshold)
  for (long r = 0; r < rows; ++r) {
    y[static_cast<std::size_t>(r)] = b[r] + dot(W + static_cast<std::size_t>(r) * in, xp, in);
  }
}

void dense_backward_input(const double* W, std::size_t in, std::span<const double> gy,
                          std::span<double> gx) {
  constexpr std::size_t kBlock = 64;
  const auto blocks = static_cast<long>((in + kBlock - 1) / kBlock);
#pragma omp parallel for schedule(static) if (gy.size() * in >= kParallelThreshold)
  for (long blk = 0; blk < blocks; ++blk) {
    const std::size_t c0 = static_cast<std::size_t>(blk) * kBlock;
    transpose_times(W, in, gy, c0, std::min(in, c0 + kBlock), gx.data());
  }
}

void dense_accumulate(double* gW, double* gb, std::size_t in, std::size_t rows,
                      std::span<const GradContribution> contributions) {
  const auto nrows = static_cast<long>(rows);
#pragma omp parallel for schedule(static) if (rows * in * contributions.size() >= kParallelThreshold)
  for (long r = 0; r < nrows; ++r) {
    double* w = gW + static_cast<std::size_t>(r) * in;
    for (const auto& contrib : contributions) {
      const double g = contrib.grad_out[r];
      if (g == 0.0) continue;
      for (std::size_t c = 0; c < in; ++c) w[c] += g * contrib.input[c];
      gb[r] += g;
    }
  }
}

void adam_update(std::span<double> params, std::span<double> m, std::span<double> v,
                 std::span<const double> grad, double lr, double beta1, double beta2, double eps,
                 long step) {
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  constexpr std::size_t kBlock = 4096;
  const auto blocks = static_cast<long>((params.size() + kBlock - 1) / kBlock);
#pragma omp parallel for schedule(static) if (params.size() >= kParallelThreshold)
  for (long blk = 0; blk < blocks; ++blk) {
    const std::size_t i0 = static_cast<std::size_t>(blk) * kBlock;
    const std::size_t i1 = std::min(params.size(), i0 + kBlock);
    adam_range(params.data(), m.data(), v.data(), grad.data(), i0, i1, lr, beta1, beta2, eps, c1,
               c2);
  }
}

namespace serial {

void dense_forward(const double* W, const double* b, std::size_t in, std::span<const double> x,
                   std::span<double> y) {
  for (std::size_t r = 0; r < y.size(); ++r) y[r] = b[r] + dot(W + r * in, x.data(), in);
}

void dense_backward_input(const double* W, std::size_t in, std::span<const double> gy,
                          std::span<double> gx) {
  transpose_times(W, in, gy, 0, in, gx.data());
}

void dense_accumulate(double* gW, double* gb, std::size_t in, std::size_t rows,
                      std::span<const GradContribution> contributions) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (const auto& contrib : contributions) {
      const double g = contrib.grad_out[r];
      if (g == 0.0) continue;
      for (std::size_t c = 0; c < in; ++c) gW[r * in + c] += g * contrib.input[c];
      gb[r] += g;
    }
  }
}

void adam_update(std::span<double> params, std::span<double> m, std::span<double> v,
                 std::span<const double> grad, double lr, double beta1, double beta2, double eps,
                 long step) {
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  adam_range(params.data(), m.data(), v.data(), grad.data(), 0, params.size(), lr, beta1, beta2,
             eps, c1, c2);
}

}  // namespace serial

}  // namespace rsdrl::kernels
