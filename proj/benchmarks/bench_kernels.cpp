#include <benchmark/benchmark.h>

#include "lazyformer/attention.hpp"
#include "lazyformer/model.hpp"
#include "lazyformer/tensor.hpp"

namespace {

using namespace lazyformer;

constexpr std::size_t kHidden = 256;
constexpr std::size_t kHeads = 4;

AttentionParams make_params(RandomState& rng, bool with_qk) {
  AttentionParams p;
  p.heads = kHeads;
  auto matrix = [&] { return Tensor::normal({kHidden, kHidden}, kInitStddev, rng); };
  if (with_qk) {
    p.wq = matrix();
    p.bq = Tensor({kHidden});
    p.wk = matrix();
    p.bk = Tensor({kHidden});
  }
  p.wv = matrix();
  p.bv = Tensor({kHidden});
  p.wo = matrix();
  p.bo = Tensor({kHidden});
  return p;
}

void BM_ComputeAttention(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  set_finite_checks(false);
  RandomState rng(1);
  const auto params = make_params(rng, true);
  const RelativeBias bias(Tensor::normal({32, kHeads}, kInitStddev, rng), 128);
  const Tensor offsets = bias.offset_bias(n);
  const Tensor x = Tensor::normal({n, kHidden}, 1.0, rng);
  for (auto _ : state) {
    auto r = compute_attention(x, params, offsets, {}, rng);
    benchmark::DoNotOptimize(r.output.data().data());
  }
  set_finite_checks(true);
}
BENCHMARK(BM_ComputeAttention)->RangeMultiplier(2)->Range(64, 1024)->Unit(benchmark::kMillisecond);

void BM_ReuseAttention(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  set_finite_checks(false);
  RandomState rng(1);
  const auto first = make_params(rng, true);
  const auto reuse = make_params(rng, false);
  const Tensor x = Tensor::normal({n, kHidden}, 1.0, rng);
  const auto cache = compute_attention(x, first, Tensor(), {}, rng).cache;
  for (auto _ : state) {
    auto out = reuse_attention(x, reuse, cache, {}, rng);
    benchmark::DoNotOptimize(out.data().data());
  }
  set_finite_checks(true);
}
BENCHMARK(BM_ReuseAttention)->RangeMultiplier(2)->Range(64, 1024)->Unit(benchmark::kMillisecond);

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  RandomState rng(2);
  const Tensor a = Tensor::normal({n, n}, 1.0, rng);
  const Tensor b = Tensor::normal({n, n}, 1.0, rng);
  for (auto _ : state) {
    auto c = ops::matmul(a, b);
    benchmark::DoNotOptimize(c.data().data());
  }
  state.counters["GFLOP/s"] = benchmark::Counter(
      2.0 * static_cast<double>(n * n * n), benchmark::Counter::kIsIterationInvariantRate,
      benchmark::Counter::OneK::kIs1000);
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(64, 512);

void BM_SoftmaxRows(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  RandomState rng(3);
  const Tensor a = Tensor::normal({kHeads * n, n}, 1.0, rng);
  for (auto _ : state) {
    auto s = ops::softmax_rows(a);
    benchmark::DoNotOptimize(s.data().data());
  }
}
BENCHMARK(BM_SoftmaxRows)->RangeMultiplier(2)->Range(64, 1024);

}  // namespace

BENCHMARK_MAIN();
