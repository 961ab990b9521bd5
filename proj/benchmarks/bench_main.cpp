#include <benchmark/benchmark.h>

#include <numeric>

#include "loft/classical.hpp"
#include "loft/io.hpp"
#include "loft/loftgan/trainer.hpp"
#include "loft/nn/ops.hpp"
#include "loft/rng.hpp"
#include "loft/sim.hpp"

using namespace loft;

namespace {

nn::Tensor random_tensor(nn::Shape s, Rng& r) {
  nn::Tensor t(std::move(s));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 2.0 * r.uniform() - 1.0;
  return t;
}

void BM_Propagate(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto tm = gen_tm(n, 4 * n, 1);
  Rng r(2);
  std::vector<double> v(n);
  for (double& x : v) x = r.uniform();
  const PhasePattern p(v);
  for (auto _ : state) benchmark::DoNotOptimize(speckle(tm, p, true));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(4 * n * n));
}
BENCHMARK(BM_Propagate)->Arg(64)->Arg(256)->Arg(1024);

void BM_ConvForward(benchmark::State& state) {
  Rng r(3);
  const auto x = random_tensor({32, 16, 16, 1}, r);
  const auto w = random_tensor({7, 7, 1, 16}, r);
  const auto b = random_tensor({16}, r);
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv2d_forward(x, w, b, 3, nn::Padding::same));
}
BENCHMARK(BM_ConvForward);

void BM_ConvBackward(benchmark::State& state) {
  Rng r(4);
  const auto x = random_tensor({32, 6, 6, 16}, r);
  const auto w = random_tensor({5, 5, 16, 32}, r);
  const auto dy = random_tensor({32, 3, 3, 32}, r);
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv2d_backward(x, w, dy, 2, nn::Padding::same));
}
BENCHMARK(BM_ConvBackward);

void BM_TrainStep(benchmark::State& state) {
  const auto mode = static_cast<gan::AblationMode>(state.range(0));
  auto model = gan::build_model(16, 8, 1);
  const auto ds = io::gen_dataset(gen_tm(64, 256, 1), 32, 2);
  std::vector<std::size_t> idx(32);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto batch = gan::make_batch(model, ds, idx);
  gan::Optimizers opt;
  Rng r(5);
  for (auto _ : state) benchmark::DoNotOptimize(gan::train_step(model, opt, batch, {}, mode, r));
  state.SetLabel(std::string(gan::to_string(mode)));
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_CsaSweep(benchmark::State& state) {
  const auto tm = gen_tm(64, 16, 6);
  const auto target = TargetSpec::points(4, {{1, 1}});
  for (auto _ : state) benchmark::DoNotOptimize(continuous_sequential(make_oracle(tm, target), 64, 32, 1, 7));
}
BENCHMARK(BM_CsaSweep)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
