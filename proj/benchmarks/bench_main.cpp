#include <benchmark/benchmark.h>

#include "affect/nn.hpp"
#include "affect/ops.hpp"
#include "affect/segmentation.hpp"
#include "affect/temporal_model.hpp"
#include "affect/trainer.hpp"

using namespace affect;

namespace {

Tensor random(Shape shape, Rng& rng, bool grad = false) {
  std::normal_distribution<double> n(0, 1);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = n(rng);
  return Tensor::from_vector(std::move(shape), std::move(v), grad);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(0);
  auto a = random({n, n}, rng), b = random({n, n}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128)->Arg(256);

void BM_Conv1d(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  auto x = random({64, len}, rng), w = random({64, 64, 3}, rng), bias = random({64}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv1d_dilated(x, w, bias, 4));
}
BENCHMARK(BM_Conv1d)->Arg(100)->Arg(300);

void BM_Attention(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  nn::MultiHeadSelfAttention attn(64, 4, rng);
  auto x = random({len, 64}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(attn.forward(x, {}));
}
BENCHMARK(BM_Attention)->Arg(100)->Arg(300);

void BM_SegmentForwardBackward(benchmark::State& state) {
  auto cfg = TrainConfig::desk(Task::VA, 32);
  Rng rng(3);
  TemporalModel model(cfg.model, rng);
  const std::size_t w = cfg.segmentation.window;
  auto x = random({w, 32}, rng);
  auto target = random({w, 2}, rng);
  std::vector<bool> mask(w, true);
  Rng drop(4);
  for (auto _ : state) {
    model.zero_grad();
    auto out = model.forward(x, mask, nn::RunMode::train(drop));
    auto loss = sum(square(sub(out, target)));
    loss.backward();
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_SegmentForwardBackward)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
