#include <benchmark/benchmark.h>

#include "rdistill/core_math.hpp"
#include "rdistill/data_synth.hpp"
#include "rdistill/mlp.hpp"
#include "rdistill/rng.hpp"

using namespace rdistill;

namespace {

Vec random_logits(std::size_t m, std::uint64_t seed) {
  CounterRng rng(seed);
  Vec f(m);
  for (double& v : f) v = -5.0 + 10.0 * rng.uniform();
  return f;
}

void BM_Softmax(benchmark::State& state) {
  const Vec f = random_logits(static_cast<std::size_t>(state.range(0)), 1);
  Vec out(f.size());
  for (auto _ : state) {
    softmax_into(f, out);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_Softmax)->Arg(5)->Arg(10)->Arg(100);

void BM_MarginLossAndGrad(benchmark::State& state) {
  const std::size_t m = static_cast<std::size_t>(state.range(0));
  const Vec f = random_logits(m, 2);
  Vec p = softmax(random_logits(m, 3));
  Vec log_c = random_logits(m, 4);
  Vec grad(m), scratch(m);
  for (auto _ : state) {
    benchmark::DoNotOptimize(margin_loss_and_grad(p, f, log_c, grad, scratch));
  }
}
BENCHMARK(BM_MarginLossAndGrad)->Arg(5)->Arg(10)->Arg(100);

void BM_MlpForwardBackward(benchmark::State& state) {
  const std::size_t h = static_cast<std::size_t>(state.range(0));
  const ScorerParams params = ScorerParams::init({2, h, h, 5}, 5);
  const Vec x{0.3, -1.2};
  const Vec u{0.1, -0.2, 0.3, -0.4, 0.5};
  for (auto _ : state) {
    benchmark::DoNotOptimize(forward(params, x));
    benchmark::DoNotOptimize(backward(params, x, u));
  }
}
BENCHMARK(BM_MlpForwardBackward)->Arg(16)->Arg(64);

void BM_SgdEpoch(benchmark::State& state) {
  const auto model = make_model(5, 2, {100.0, 5}, 0);
  const Dataset data = sample(model, static_cast<std::size_t>(state.range(0)), 1);
  const ExampleLoss loss = [&](std::size_t i, std::span<const double> f, std::span<double> g) {
    const Vec grad = xent_grad(data.labels[i], f);
    std::copy(grad.begin(), grad.end(), g.begin());
    return xent_loss(data.labels[i], f);
  };
  SgdConfig cfg;
  cfg.epochs = 1;
  const ScorerParams init = ScorerParams::init({2, 64, 64, 5}, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sgd_train(init, data.features, loss, cfg));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SgdEpoch)->Arg(5000)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
