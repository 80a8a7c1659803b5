// Serial reference kernels against their OpenMP counterparts.
#include <benchmark/benchmark.h>

#include "afdcd/checks.hpp"
#include "afdcd/losses.hpp"
#include "afdcd/nn.hpp"

namespace {

using namespace afdcd;

struct ConvCase {
  FeatureMap input;
  ConvLayer layer;
  FeatureMap upstream;
};

ConvCase make_conv_case(std::size_t side, std::size_t channels) {
  Rng rng(7);
  ConvCase c{random_feature_map(side, side, channels, rng), ConvLayer(channels, channels),
             random_feature_map(side, side, channels, rng)};
  for (double& v : c.layer.kernel.values()) v = rng.uniform(-0.1, 0.1);
  return c;
}

OmniInstance make_oc_case(std::size_t side, std::size_t channels, std::size_t pool) {
  Rng rng(11);
  OmniInstance inst{random_feature_map(side, side, channels, rng), random_feature_map(side, side, channels, rng),
                    ContrastConfig{}};
  inst.cfg.pool_factor = pool;
  return inst;
}

void BM_conv2d_parallel(benchmark::State& state) {
  const ConvCase c = make_conv_case(state.range(0), state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(c.input, c.layer));
}

void BM_conv2d_serial(benchmark::State& state) {
  const ConvCase c = make_conv_case(state.range(0), state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(reference::conv2d(c.input, c.layer));
}

void BM_conv2d_grad_parallel(benchmark::State& state) {
  const ConvCase c = make_conv_case(state.range(0), state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_grad(c.input, c.layer, c.upstream));
}

void BM_conv2d_grad_serial(benchmark::State& state) {
  const ConvCase c = make_conv_case(state.range(0), state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(reference::conv2d_grad(c.input, c.layer, c.upstream));
}

void BM_loss_oc_parallel(benchmark::State& state) {
  const OmniInstance inst = make_oc_case(state.range(0), state.range(1), state.range(2));
  for (auto _ : state) benchmark::DoNotOptimize(loss_oc(inst.student, inst.teacher, inst.cfg));
}

void BM_loss_oc_serial(benchmark::State& state) {
  const OmniInstance inst = make_oc_case(state.range(0), state.range(1), state.range(2));
  for (auto _ : state) benchmark::DoNotOptimize(reference::loss_oc(inst.student, inst.teacher, inst.cfg));
}

}  // namespace

BENCHMARK(BM_conv2d_parallel)->Args({32, 32})->Args({64, 64})->UseRealTime();
BENCHMARK(BM_conv2d_serial)->Args({32, 32})->Args({64, 64})->UseRealTime();
BENCHMARK(BM_conv2d_grad_parallel)->Args({32, 32})->Args({64, 64})->UseRealTime();
BENCHMARK(BM_conv2d_grad_serial)->Args({32, 32})->Args({64, 64})->UseRealTime();
BENCHMARK(BM_loss_oc_parallel)->Args({32, 32, 4})->Args({32, 32, 1})->Args({64, 64, 4})->UseRealTime();
BENCHMARK(BM_loss_oc_serial)->Args({32, 32, 4})->Args({32, 32, 1})->Args({64, 64, 4})->UseRealTime();

BENCHMARK_MAIN();
