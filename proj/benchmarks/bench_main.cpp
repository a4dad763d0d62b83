#include <benchmark/benchmark.h>

#include <random>

#include "fedbcs/federation.hpp"
#include "fedbcs/ops.hpp"
#include "fedbcs/server.hpp"
#include "fedbcs/spectral.hpp"

namespace {

using namespace fedbcs;

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Tensor t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0, 1);
  for (auto& v : t.data()) v = static_cast<Real>(n(rng));
  return t;
}

void BM_Conv2dForwardBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_tensor({c, 64, 64}, 1), w = random_tensor({c, c, 3, 3}, 2), b = random_tensor({c}, 3);
  for (auto _ : state) {
    Tape t;
    Var wv = t.variable(w);
    Var y = ops::conv2d(t.constant(x), wv, t.variable(b), 1, 1);
    t.backward(ops::sum(y));
    benchmark::DoNotOptimize(t.grad(wv).data().data());
  }
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(8)->Arg(16)->Arg(32);

void BM_Fft2(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_tensor({16, n, n}, 4);
  for (auto _ : state) {
    Tape t;
    auto s = spectral::fft2(t.constant(x));
    benchmark::DoNotOptimize(s.amplitude.value().data().data());
  }
}
BENCHMARK(BM_Fft2)->Arg(16)->Arg(32)->Arg(64);

void BM_FsrForwardBackward(benchmark::State& state) {
  const Tensor x = random_tensor({16, 32, 32}, 5), w = random_tensor({2, 32}, 6);
  for (auto _ : state) {
    Tape t;
    Var xv = t.variable(x);
    Var y = spectral::fsr_forward(xv, {t.variable(w), t.variable(Tensor::zeros({2}))});
    t.backward(ops::sum(y));
    benchmark::DoNotOptimize(t.grad(xv).data().data());
  }
}
BENCHMARK(BM_FsrForwardBackward);

void BM_FinchCluster(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<Tensor> points;
  for (std::size_t i = 0; i < n; ++i) points.push_back(random_tensor({24}, 100 + i));
  for (auto _ : state) benchmark::DoNotOptimize(finch_cluster(points));
}
BENCHMARK(BM_FinchCluster)->Arg(8)->Arg(64)->Arg(256);

void BM_FederatedRound(benchmark::State& state) {
  FederationConfig c;
  c.method = static_cast<Method>(state.range(0));
  c.rounds = 1;
  c.eval_every = 0;
  c.loss.lambda_c = Real(0.01);
  const auto data = make_federation_data(c.clients, default_styles(c.clients), DataSpec{32, 6, 1}, 0);
  for (auto _ : state) benchmark::DoNotOptimize(run_experiment(c, data).final_params.size());
  state.SetLabel(to_string(c.method));
}
BENCHMARK(BM_FederatedRound)
    ->Arg(static_cast<int>(Method::kFedAvg))
    ->Arg(static_cast<int>(Method::kFedBcs))
    ->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
