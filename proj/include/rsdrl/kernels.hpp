#pragma once

// Dense-layer kernels used by the approximators.
//
// Every parallel kernel partitions its OUTPUT indices across threads and keeps
// the summation order of each output fixed, so results are bit-identical for
// any thread count. The `serial` namespace holds the plain-loop reference
// versions used by tests and the benchmark.

#include <cstddef>
#include <span>

namespace rsdrl::kernels {

/// One (input, output-gradient) pair contributing to a weight gradient.
struct GradContribution {
  const double* input;   // length `in`
  const double* grad_out;  // length `rows`
};

/// y[r] = b[r] + sum_c W[r, c] x[c] for r in [0, y.size()).
/// W is row-major with `in` columns and already offset to the first row.
void dense_forward(const double* W, const double* b, std::size_t in, std::span<const double> x,
                   std::span<double> y);

/// gx[c] += sum_r W[r, c] gy[r].
void dense_backward_input(const double* W, std::size_t in, std::span<const double> gy,
                          std::span<double> gx);

/// gW[r, c] += sum_j gy_j[r] x_j[c]; gb[r] += sum_j gy_j[r], j in contribution order.
void dense_accumulate(double* gW, double* gb, std::size_t in, std::size_t rows,
                      std::span<const GradContribution> contributions);

/// Adam update over a flat parameter vector (bias-corrected).
void adam_update(std::span<double> params, std::span<double> m, std::span<double> v,
                 std::span<const double> grad, double lr, double beta1, double beta2, double eps,
                 long step);

namespace serial {
void dense_forward(const double* W, const double* b, std::size_t in, std::span<const double> x,
                   std::span<double> y);
void dense_backward_input(const double* W, std::size_t in, std::span<const double> gy,
                          std::span<double> gx);
void dense_accumulate(double* gW, double* gb, std::size_t in, std::size_t rows,
                      std::span<const GradContribution> contributions);
void adam_update(std::span<double> params, std::span<double> m, std::span<double> v,
                 std::span<const double> grad, double lr, double beta1, double beta2, double eps,
                 long step);
}  // namespace serial

}  // namespace rsdrl::kernels
