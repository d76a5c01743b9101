#include <benchmark/benchmark.h>

#include <random>

#include "fcnpose/compressor.hpp"
#include "fcnpose/half.hpp"
#include "fcnpose/network.hpp"
#include "fcnpose/tensor.hpp"

namespace {

using namespace fcnpose;

Tensor random_tensor(std::vector<std::size_t> shape, std::uint32_t seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  Tensor t(std::move(shape));
  for (float& v : t.values()) v = dist(gen);
  return t;
}

ConvKernel random_kernel(std::size_t out, std::size_t in, std::uint32_t seed) {
  ConvKernel k = ConvKernel::zeros(out, in);
  k.weights = random_tensor({out, in, 3, 3}, seed);
  return k;
}

const Model& base_model() {
  static const Model model = build_fcn_pose(42);
  return model;
}

// args: prune percent, resolution
void BM_Forward(benchmark::State& state) {
  const Model model = prune_model(base_model(), static_cast<double>(state.range(0)) / 100.0);
  const auto res = static_cast<std::size_t>(state.range(1));
  const Tensor image = random_tensor({3, res, res}, 1);
  for (auto _ : state) benchmark::DoNotOptimize(forward(model, image));
  state.counters["params"] = static_cast<double>(count_params(model.spec));
  state.counters["fps"] = benchmark::Counter(static_cast<double>(state.iterations()), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_Forward)
    ->ArgsProduct({{0, 30, 50, 70, 90}, {64}})
    ->Args({0, 128})
    ->Args({70, 128})
    ->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  const Model model = prune_model(base_model(), static_cast<double>(state.range(0)) / 100.0);
  const Tensor image = random_tensor({3, 64, 64}, 2);
  ModelWeights grads = zero_like(model.weights);
  for (auto _ : state) {
    const ForwardTrace trace = forward_trace(model.spec, model.weights, image);
    Tensor upstream(trace.activations.back().shape(), 1e-3f);
    backward(model.spec, model.weights, trace, upstream, grads);
    benchmark::ClobberMemory();
  }
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(70)->Unit(benchmark::kMillisecond);

// args: out channels, in channels, spatial size
void BM_Conv(benchmark::State& state) {
  const auto out = static_cast<std::size_t>(state.range(0));
  const auto in = static_cast<std::size_t>(state.range(1));
  const auto hw = static_cast<std::size_t>(state.range(2));
  const ConvKernel kernel = random_kernel(out, in, 3);
  const Tensor input = random_tensor({in, hw, hw}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_forward(input, kernel));
  state.counters["GFLOP/s"] = benchmark::Counter(2.0 * 9.0 * static_cast<double>(out * in * hw * hw) *
                                                     static_cast<double>(state.iterations()),
                                                 benchmark::Counter::kIsRate, benchmark::Counter::kIs1000);
}
BENCHMARK(BM_Conv)
    ->Args({128, 3, 64})
    ->Args({64, 128, 32})
    ->Args({16, 16, 16})
    ->Args({8, 8, 16})
    ->Args({128, 128, 8})
    ->Unit(benchmark::kMicrosecond);

void BM_ConvBackward(benchmark::State& state) {
  const auto out = static_cast<std::size_t>(state.range(0));
  const auto in = static_cast<std::size_t>(state.range(1));
  const auto hw = static_cast<std::size_t>(state.range(2));
  const ConvKernel kernel = random_kernel(out, in, 5);
  const Tensor input = random_tensor({in, hw, hw}, 6);
  const Tensor upstream = random_tensor({out, hw, hw}, 7);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_backward(input, kernel, upstream));
}
BENCHMARK(BM_ConvBackward)->Args({128, 3, 64})->Args({64, 128, 32})->Args({16, 16, 16})->Unit(benchmark::kMicrosecond);

void BM_Quantize(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(quantize_model(base_model()));
}
BENCHMARK(BM_Quantize)->Unit(benchmark::kMicrosecond);

void BM_HalfRoundTrip(benchmark::State& state) {
  const Tensor values = random_tensor({1 << 16}, 8);
  for (auto _ : state) {
    float sum = 0.0f;
    for (float v : values.values()) sum += fp16_to_fp32(fp32_to_fp16(v));
    benchmark::DoNotOptimize(sum);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * (1 << 16));
}
BENCHMARK(BM_HalfRoundTrip);

}  // namespace

BENCHMARK_MAIN();
