#include <benchmark/benchmark.h>

#include "dgmn/dgmn.hpp"
#include "dgmn/dgmn2.hpp"
#include "dgmn/oracle.hpp"

using namespace dgmn;

namespace {

Dgmn2Attention make_attention(std::int64_t dim, Rng& rng) {
  Dgmn2Config cfg;
  cfg.dim = dim;
  cfg.heads = 2;
  cfg.rates = {1, 2};
  return Dgmn2Attention(cfg, rng);
}

// Sampled attention over an (S x 16) map; cost should grow linearly in S.
// Sizes stop at 16 because the dense reference is capped there.
void BM_SampledAttention(benchmark::State& state) {
  Rng rng(1);
  const Dgmn2Attention attn = make_attention(16, rng);
  const Tensor x = rng.normal_tensor({1, 16, state.range(0), 16}, 1.0);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(attn.forward(x));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SampledAttention)->RangeMultiplier(2)->Range(4, 16)->Complexity(benchmark::oN);

// Every query against every position; cost should grow quadratically in S.
void BM_DenseAttention(benchmark::State& state) {
  Rng rng(1);
  const Dgmn2Attention attn = make_attention(16, rng);
  const Tensor x = rng.normal_tensor({1, 16, state.range(0), 16}, 1.0);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(oracle::dense_attention_layer(x, attn));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_DenseAttention)->RangeMultiplier(2)->Range(4, 16)->Complexity(benchmark::oNSquared);

void BM_SampledAttentionBackward(benchmark::State& state) {
  Rng rng(2);
  const Dgmn2Attention attn = make_attention(16, rng);
  const Tensor x = rng.normal_tensor({1, 16, state.range(0), state.range(0)}, 1.0);
  for (auto _ : state) backward(sum(attn.forward(x)));
}
BENCHMARK(BM_SampledAttentionBackward)->Arg(8)->Arg(16);

void BM_DgmnModule(benchmark::State& state) {
  Rng rng(3);
  DgmnConfig cfg;
  cfg.channels = 32;
  DgmnModule m(cfg, rng);
  const Tensor x = rng.normal_tensor({1, 32, state.range(0), state.range(0)}, 1.0);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(m.forward(x));
}
BENCHMARK(BM_DgmnModule)->Arg(8)->Arg(16);

void BM_Conv3x3(benchmark::State& state) {
  Rng rng(4);
  const std::int64_t c = state.range(0);
  const Tensor x = rng.normal_tensor({1, c, 32, 32}, 1.0);
  const Tensor w = rng.normal_tensor({c, c, 3, 3}, 0.1);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, Tensor{}, {1, 1}));
  state.counters["MAC/s"] = benchmark::Counter(static_cast<double>(32 * 32 * c * c * 9) * state.iterations(),
                                               benchmark::Counter::kIsRate);
}
BENCHMARK(BM_Conv3x3)->Arg(16)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
