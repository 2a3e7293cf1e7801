// Parallel kernels against their serial references.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "rsdrl/approximator.hpp"
#include "rsdrl/kernels.hpp"
#include "rsdrl/oracle.hpp"

namespace {

using namespace rsdrl;

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Output layer of the CDF head: 128 inputs, 4 x 200 outputs.
constexpr std::size_t kIn = 128;
constexpr std::size_t kOut = 800;

template <auto Kernel>
void BM_DenseForward(benchmark::State& state) {
  const auto W = random_vector(kIn * kOut, 1);
  const auto b = random_vector(kOut, 2);
  const auto x = random_vector(kIn, 3);
  std::vector<double> y(kOut);
  for (auto _ : state) {
    Kernel(W.data(), b.data(), kIn, x, y);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_DenseForward<kernels::dense_forward>)->Name("dense_forward/parallel");
BENCHMARK(BM_DenseForward<kernels::serial::dense_forward>)->Name("dense_forward/serial");

template <auto Kernel>
void BM_DenseBackwardInput(benchmark::State& state) {
  const auto W = random_vector(kIn * kOut, 1);
  const auto gy = random_vector(kOut, 2);
  std::vector<double> gx(kIn);
  for (auto _ : state) {
    Kernel(W.data(), kIn, gy, gx);
    benchmark::DoNotOptimize(gx.data());
  }
}
BENCHMARK(BM_DenseBackwardInput<kernels::dense_backward_input>)
    ->Name("dense_backward_input/parallel");
BENCHMARK(BM_DenseBackwardInput<kernels::serial::dense_backward_input>)
    ->Name("dense_backward_input/serial");

template <auto Kernel>
void BM_DenseAccumulate(benchmark::State& state) {
  const auto xs = random_vector(kIn * 32, 1);
  const auto gys = random_vector(kOut * 32, 2);
  std::vector<kernels::GradContribution> contributions;
  for (std::size_t j = 0; j < 32; ++j) contributions.push_back({&xs[j * kIn], &gys[j * kOut]});
  std::vector<double> gW(kIn * kOut), gb(kOut);
  for (auto _ : state) {
    Kernel(gW.data(), gb.data(), kIn, kOut, contributions);
    benchmark::DoNotOptimize(gW.data());
  }
}
BENCHMARK(BM_DenseAccumulate<kernels::dense_accumulate>)->Name("dense_accumulate/parallel");
BENCHMARK(BM_DenseAccumulate<kernels::serial::dense_accumulate>)->Name("dense_accumulate/serial");

template <auto Kernel>
void BM_Adam(benchmark::State& state) {
  auto params = random_vector(120000, 1);
  const auto grad = random_vector(params.size(), 2);
  std::vector<double> m(params.size()), v(params.size());
  long step = 0;
  for (auto _ : state) {
    Kernel(params, m, v, grad, 1e-4, 0.9, 0.999, 1e-5, ++step);
    benchmark::DoNotOptimize(params.data());
  }
}
BENCHMARK(BM_Adam<kernels::adam_update>)->Name("adam_update/parallel");
BENCHMARK(BM_Adam<kernels::serial::adam_update>)->Name("adam_update/serial");

// Minibatch Cramer loss with the default network and grid.
struct LossFixture {
  CdfNetwork net{SupportGrid{}};
  std::vector<SampleInput> inputs;
  std::vector<double> z = SupportGrid{}.points();
  Matrix targets;

  LossFixture() {
    net.initialize(1);
    std::mt19937_64 rng(2);
    for (int i = 0; i < 32; ++i) {
      inputs.push_back({GridState::from_index(static_cast<int>(rng() % kNumStates)),
                        action_from_index(static_cast<int>(rng() % kNumActions))});
    }
    targets = Matrix(inputs.size(), z.size());
    for (std::size_t i = 0; i < targets.rows; ++i) {
      for (std::size_t k = 0; k < z.size(); ++k) targets(i, k) = z[k] >= 0.1 * (i % 5) ? 1.0 : 0.0;
    }
  }
};

void BM_LossGrouped(benchmark::State& state) {
  const LossFixture f;
  for (auto _ : state) {
    benchmark::DoNotOptimize(loss_and_gradient(f.net, f.targets, f.inputs, f.z).loss);
  }
}
BENCHMARK(BM_LossGrouped)->Name("cramer_loss/grouped");

void BM_LossReference(benchmark::State& state) {
  const LossFixture f;
  for (auto _ : state) {
    benchmark::DoNotOptimize(reference::loss_and_gradient(f.net, f.targets, f.inputs, f.z).loss);
  }
}
BENCHMARK(BM_LossReference)->Name("cramer_loss/reference");

template <bool Parallel>
void BM_BellmanBackup(benchmark::State& state) {
  const EnvLayout& layout = layout_for(EnvKind::RiskyTransitions);
  const auto oracle = distributional_value_iteration(EnvKind::RiskyTransitions, RiskParams{}, {}, 5);
  for (auto _ : state) {
    auto t = Parallel ? bellman_backup(layout, oracle.table, oracle.policy)
                      : serial::bellman_backup(layout, oracle.table, oracle.policy);
    benchmark::DoNotOptimize(t);
  }
}
BENCHMARK(BM_BellmanBackup<true>)->Name("bellman_backup/parallel");
BENCHMARK(BM_BellmanBackup<false>)->Name("bellman_backup/serial");

template <bool Parallel>
void BM_Rollouts(benchmark::State& state) {
  const EnvLayout& layout = layout_for(EnvKind::RiskyGridWorld);
  const auto policy = distributional_value_iteration(EnvKind::RiskyGridWorld, RiskParams{}).policy;
  for (auto _ : state) {
    auto r = Parallel ? rollout_episodes(policy, layout, 10000, 1)
                      : serial::rollout_episodes(policy, layout, 10000, 1);
    benchmark::DoNotOptimize(r.data());
  }
}
BENCHMARK(BM_Rollouts<true>)->Name("rollouts_10k/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Rollouts<false>)->Name("rollouts_10k/serial")->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
