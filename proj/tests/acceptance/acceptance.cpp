// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.
//
// usage: acceptance <work-dir> [criterion numbers...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "fcnpose/compressor.hpp"
#include "fcnpose/dataset.hpp"
#include "fcnpose/half.hpp"
#include "fcnpose/metrics.hpp"
#include "fcnpose/network.hpp"
#include "fcnpose/postprocess.hpp"
#include "fcnpose/tensor.hpp"
#include "fcnpose/trainer.hpp"
#include "oracles.hpp"
#include "partition.hpp"

namespace fs = std::filesystem;
using namespace fcnpose;

namespace {

constexpr std::uint64_t kSeed = 42;
constexpr std::size_t kResolution = 64;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

int run_command(const std::string& cmd) {
  std::fprintf(stderr, "$ %s\n", cmd.c_str());
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Shared state for the learning, throughput and sweep criteria.
struct Context {
  fs::path work;
  fs::path data;
  std::vector<Sample> train_set;
  std::vector<Sample> val_set;
  Model baseline;
  double baseline_seconds = 0.0;
  bool have_baseline = false;
};

void ensure_dataset(Context& ctx) {
  if (!ctx.train_set.empty()) return;
  ctx.data = ctx.work / "data";
  if (!fs::exists(ctx.data / "train.json")) {
    fs::remove_all(ctx.data);
    const int code = run_command(std::string(FCNPOSE_CLI) + " dataset gen --seed " + std::to_string(kSeed) +
                                 " --resolution " + std::to_string(kResolution) +
                                 " --n 500 --val-fraction 0.2 --augment 0 --out " + ctx.data.string());
    if (code != 0) throw std::runtime_error("dataset gen exited with " + std::to_string(code));
  }
  ctx.train_set = load_split(ctx.data, "train");
  ctx.val_set = load_split(ctx.data, "val");
}

// --------------------------------------------------------------------- 1 --

Outcome criterion_architecture() {
  Outcome out;
  const Model m = build_fcn_pose(kSeed);
  const auto shapes = layer_output_shapes(m.spec, 224, 224);
  const auto& table = oracle::fcn_pose_table();
  out.require(shapes.size() == table.size(), "layer count " + std::to_string(shapes.size()));
  const auto params = conv_param_counts(m.spec);
  std::size_t k = 0;
  for (std::size_t i = 0; i < std::min(shapes.size(), table.size()); ++i) {
    const bool shape_ok = shapes[i].channels == table[i].channels && shapes[i].height == table[i].height &&
                          shapes[i].width == table[i].width;
    out.require(shape_ok, std::string("shape mismatch at ") + table[i].name);
    const std::size_t p = m.spec.layers[i].kind == LayerKind::conv ? params[k++] : 0;
    out.require(p == table[i].params, std::string("params mismatch at ") + table[i].name);
  }
  out.require(count_params(m.spec) == oracle::kTableTotalParams, "total " + std::to_string(count_params(m.spec)));
  out.note("total params " + std::to_string(count_params(m.spec)) + ", " + std::to_string(table.size()) + " rows");
  return out;
}

// --------------------------------------------------------------------- 2 --

Outcome criterion_pruning_table() {
  Outcome out;
  const Model full = build_fcn_pose(kSeed);
  auto pruned = [&](int percent) { return count_params(prune_model(full, percent / 100.0).spec); };
  for (const auto& [percent, expected] : oracle::pruning_table()) {
    const std::size_t got = pruned(percent);
    const std::size_t closed = oracle::closed_form_params(percent);
    out.require(got == expected, std::to_string(percent) + "%: apply_prune gives " + std::to_string(got));
    out.require(closed == expected, std::to_string(percent) + "%: closed form gives " + std::to_string(closed));
  }
  const std::size_t r10 = pruned(10), r20 = pruned(20);
  out.require(r10 != oracle::kPrintedRow10 && r20 != oracle::kPrintedRow20, "rates 10/20 unexpectedly match");
  out.require(r10 == oracle::kDerivedRow10 && r10 == oracle::closed_form_params(10), "10%: " + std::to_string(r10));
  out.require(r20 == oracle::kDerivedRow20 && r20 == oracle::closed_form_params(20), "20%: " + std::to_string(r20));
  out.note("30..90% match; 10%/20% give " + std::to_string(r10) + "/" + std::to_string(r20));
  return out;
}

// --------------------------------------------------------------------- 3 --

Outcome criterion_clustering() {
  Outcome out;
  const auto t0 = Clock::now();
  std::mt19937 gen(kSeed);
  const double ms[] = {1.0, 2.0, 5.0};
  std::size_t largest = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = gen() % 501;
    const double m = ms[gen() % 3];
    const PointSet pts = oracle::random_points(gen, n, 64, 48);
    largest = std::max(largest, n);
    const auto got = oracle::to_partition(expansion_cluster(pts, m));
    out.require(got == oracle::brute_force_components(oracle::to_oracle(pts), m),
                "set " + std::to_string(trial) + " (n=" + std::to_string(n) + ")");
  }
  const double s = seconds_since(t0);
  out.require(s < 10.0, "runtime " + fmt("%.2f s", s));
  out.note("100 sets, n <= " + std::to_string(largest) + ", " + fmt("%.2f s", s));
  return out;
}

// --------------------------------------------------------------------- 4 --

Outcome criterion_fp16() {
  Outcome out;
  const auto t0 = Clock::now();
  const auto& table = oracle::half_table();
  out.require(table.size() >= 20, "table has " + std::to_string(table.size()) + " entries");
  for (const auto& c : table) {
    out.require(fp32_to_fp16(c.value) == c.bits, "encoding of " + fmt("%a", c.value));
  }
  // Subnormals are exact multiples of 2^-24; values past the range overflow.
  for (int k = 1; k < 1024; ++k) {
    const float v = std::ldexp(static_cast<float>(k), -24);
    out.require(fp32_to_fp16(v) == k && fp16_to_fp32(static_cast<std::uint16_t>(k)) == v, "subnormal " + std::to_string(k));
  }
  out.require(fp32_to_fp16(65520.0f) == 0x7C00 && fp32_to_fp16(-1e9f) == 0xFC00, "overflow to infinity");
  out.require(fp32_to_fp16(65519.0f) == 0x7BFF, "largest finite");

  std::mt19937_64 gen(kSeed);
  std::uniform_real_distribution<double> exponent(-14.0, std::log2(65504.0));
  std::bernoulli_distribution sign(0.5);
  double worst = 0.0;
  for (int i = 0; i < 1'000'000; ++i) {
    float x = std::min(static_cast<float>(std::exp2(exponent(gen))), 65504.0f);
    if (sign(gen)) x = -x;
    worst = std::max(worst, std::abs(static_cast<double>(fp16_to_fp32(fp32_to_fp16(x))) - x) / std::abs(x));
  }
  out.require(worst <= 0x1p-11, "round-trip error " + fmt("%.3g", worst));
  const double s = seconds_since(t0);
  out.require(s < 5.0, "runtime " + fmt("%.2f s", s));
  out.note(std::to_string(table.size()) + " table entries, worst round-trip " + fmt("%.3g", worst) + ", " +
           fmt("%.2f s", s));
  return out;
}

// --------------------------------------------------------------------- 5 --

Outcome criterion_learning(Context& ctx) {
  Outcome out;
  const auto t0 = Clock::now();
  ensure_dataset(ctx);
  out.require(ctx.train_set.size() == 400 && ctx.val_set.size() == 100,
              "split " + std::to_string(ctx.train_set.size()) + "/" + std::to_string(ctx.val_set.size()));

  TrainConfig config;
  config.seed = kSeed;
  config.max_epochs = 200;
  const auto train_start = Clock::now();
  const TrainResult base = train(build_fcn_pose(kSeed), ctx.train_set, ctx.val_set, config,
                                 [&](std::size_t epoch, double train_loss, double val_loss) {
                                   if (epoch % 10 == 0) {
                                     std::fprintf(stderr, "baseline epoch %zu train %.5f val %.5f (%.0f s)\n", epoch,
                                                  train_loss, val_loss, seconds_since(train_start));
                                   }
                                 });
  ctx.baseline = base.model;
  ctx.baseline_seconds = seconds_since(train_start);
  ctx.have_baseline = true;
  save_model(ctx.baseline, ctx.work / "baseline.fcnp");

  EvalOptions eval;
  const double pck_full = evaluate_pck(ctx.baseline, ctx.val_set, eval).mean;

  config.max_epochs = kRetrainEpochs;
  const Model pruned = prune_model(ctx.baseline, 0.7);
  const TrainResult re = retrain_after_prune(pruned, ctx.train_set, ctx.val_set, config);
  const double pck_pruned = evaluate_pck(re.model, ctx.val_set, eval).mean;
  const double s = seconds_since(t0);

  out.require(base.history.epochs() <= 200, "baseline ran " + std::to_string(base.history.epochs()) + " epochs");
  out.require(re.history.epochs() <= 100, "retrain ran " + std::to_string(re.history.epochs()) + " epochs");
  out.require(pck_full >= 0.90, "baseline PCK " + fmt("%.4f", pck_full));
  out.require(pck_full - pck_pruned <= 0.05, "70% drop " + fmt("%.4f", pck_full - pck_pruned));
  out.require(s <= 30 * 60, "runtime " + fmt("%.0f s", s));
  out.note("PCK@0.5 full " + fmt("%.4f", pck_full) + " (best epoch " + std::to_string(base.history.best_epoch) +
           "/" + std::to_string(base.history.epochs()) + "), 70% retrained " + fmt("%.4f", pck_pruned) +
           " (best epoch " + std::to_string(re.history.best_epoch) + "/" + std::to_string(re.history.epochs()) +
           "), " + fmt("%.0f s", s));
  return out;
}

// --------------------------------------------------------------------- 6 --

constexpr std::size_t kThroughputRounds = 5;

Outcome criterion_throughput(Context& ctx) {
  Outcome out;
  ensure_dataset(ctx);
  const Model base = ctx.have_baseline ? ctx.baseline : build_fcn_pose(kSeed);
  std::vector<Tensor> images;
  for (std::size_t i = 0; i < 8; ++i) images.push_back(ctx.val_set[i].image);
  BenchmarkOptions options;
  options.warmup = 5;
  options.reps = 50;

  const std::vector<int> rates{0, 30, 40, 50, 60, 70, 80, 90};
  std::map<int, Model> models;
  for (int rate : rates) models[rate] = rate == 0 ? base : prune_model(base, rate / 100.0);
  // Interleaved rounds of the warmup 5 / reps 50 protocol; per-rate median FPS.
  std::map<int, std::vector<double>> samples;
  for (std::size_t round = 0; round < kThroughputRounds; ++round) {
    for (std::size_t k = 0; k < rates.size(); ++k) {
      const int rate = rates[(k + round) % rates.size()];
      samples[rate].push_back(benchmark_inference(models[rate], images, options).inference.fps);
    }
  }
  std::map<int, double> fps;
  for (auto& [rate, v] : samples) {
    std::sort(v.begin(), v.end());
    fps[rate] = v[v.size() / 2];
  }
  std::string listing;
  for (int rate : rates) listing += (listing.empty() ? "" : " ") + std::to_string(rate) + ":" + fmt("%.1f", fps[rate]);
  const double gain = fps[70] / fps[0];
  out.require(gain >= 2.0, "70% gain " + fmt("%.2fx", gain));
  for (int rate = 40; rate <= 90; rate += 10) {
    out.require(fps[rate] >= 0.95 * fps[rate - 10],
                "FPS falls from " + std::to_string(rate - 10) + "% to " + std::to_string(rate) + "%");
  }
  out.note("70% gain " + fmt("%.2fx", gain) + "; median fps over " + std::to_string(kThroughputRounds) +
           " rounds " + listing);
  return out;
}

// --------------------------------------------------------------------- 7 --

Outcome criterion_storage() {
  Outcome out;
  const Model full = build_fcn_pose(kSeed);
  for (int percent : {0, 30, 50, 70, 90}) {
    const Model m = prune_model(full, percent / 100.0);
    const Model q = quantize_model(m);
    const std::size_t params = count_params(m.spec);
    const Accounting a32 = account(m, kResolution, kResolution);
    const Accounting a16 = account(q, kResolution, kResolution);
    out.require(a32.payload_bytes == params * 4, std::to_string(percent) + "%: fp32 payload");
    out.require(a16.payload_bytes == params * 2, std::to_string(percent) + "%: fp16 payload");
    out.require(a16.payload_bytes * 2 == a32.payload_bytes, std::to_string(percent) + "%: not halved");
    if (percent == 70) {
      out.require(a16.payload_bytes == 29336, "70% fp16 payload " + std::to_string(a16.payload_bytes));
      out.note("70% fp16 payload " + std::to_string(a16.payload_bytes) + " bytes (file " +
               std::to_string(a16.size_bytes) + ")");
    }
  }
  return out;
}

// --------------------------------------------------------------------- 8 --

constexpr double kStep = 1e-3;
constexpr double kNetworkStep = 1e-5;
constexpr double kTolerance = 1e-3;
constexpr int kInstances = 20;

Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937& gen, float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> dist(lo, hi);
  Tensor t(std::move(shape));
  for (float& v : t.values()) v = dist(gen);
  return t;
}

double dot(const Tensor& a, const Tensor& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a.data()[i]) * r.data()[i];
  return s;
}

// Worst relative error per layer type.
std::map<std::string, double> gradient_errors() {
  std::map<std::string, double> worst;
  std::mt19937 gen(kSeed);
  auto check = [&](const std::string& layer, const std::function<double()>& f, float& slot, double analytic,
                   double floor = 1e-2, double step = kStep) {
    const double fd = oracle::central_difference(f, slot, step);
    worst[layer] = std::max(worst[layer], oracle::relative_error(analytic, fd, floor));
  };

  for (int n = 0; n < kInstances; ++n) {
    const std::size_t in = 1 + n % 3, out = n % 2 == 0 ? 2 + n % 4 : 17 + n % 3;
    const std::size_t h = 3 + n % 4, w = 4 + n % 3;
    Tensor input = random_tensor({in, h, w}, gen);
    ConvKernel k = ConvKernel::zeros(out, in);
    for (float& v : k.weights.values()) v = std::uniform_real_distribution<float>(-1, 1)(gen);
    for (float& v : k.biases) v = std::uniform_real_distribution<float>(-1, 1)(gen);
    const Tensor r = random_tensor({out, h, w}, gen);
    const ConvGrads g = conv2d_backward(input, k, r);
    auto objective = [&] {
      const auto y = oracle::conv2d({input.values().begin(), input.values().end()}, in, h, w,
                                    {k.weights.values().begin(), k.weights.values().end()}, k.biases, out);
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r.data()[i];
      return s;
    };
    for (std::size_t i = 0; i < input.size(); ++i) check("conv", objective, input.data()[i], g.input_grad.data()[i]);
    for (std::size_t i = 0; i < k.weights.size(); ++i) {
      check("conv", objective, k.weights.data()[i], g.kernel_grad.weights.data()[i]);
    }
    for (std::size_t o = 0; o < out; ++o) check("conv", objective, k.biases[o], g.kernel_grad.biases[o]);
  }

  for (int n = 0; n < kInstances; ++n) {
    // Distinct levels spaced well beyond the step so no window changes winner.
    Tensor input({2, 4 + 2 * static_cast<std::size_t>(n % 3), 6});
    std::vector<float> levels(input.size());
    for (std::size_t i = 0; i < levels.size(); ++i) levels[i] = 0.01f * static_cast<float>(i);
    std::shuffle(levels.begin(), levels.end(), gen);
    std::copy(levels.begin(), levels.end(), input.data());
    const Tensor r = random_tensor({2, input.height() / 2, 3}, gen);
    const Tensor g = maxpool2_backward(maxpool2(input), input.shape(), r);
    auto objective = [&] { return dot(maxpool2(input).output, r); };
    for (std::size_t i = 0; i < input.size(); ++i) check("maxpool", objective, input.data()[i], g.data()[i]);
  }

  for (int n = 0; n < kInstances; ++n) {
    const std::size_t factor = n % 2 == 0 ? 2 : 4;
    Tensor input = random_tensor({2, 3, 2 + static_cast<std::size_t>(n % 3)}, gen);
    const Tensor r = random_tensor({2, 3 * factor, input.width() * factor}, gen);
    const Tensor g = upsample_nearest_backward(r, factor);
    auto objective = [&] { return dot(upsample_nearest(input, factor), r); };
    for (std::size_t i = 0; i < input.size(); ++i) check("upsample", objective, input.data()[i], g.data()[i]);
  }

  for (int n = 0; n < kInstances; ++n) {
    Tensor input = random_tensor({2, 3, 4}, gen);
    for (float& v : input.values()) {
      if (std::abs(v) < 2 * kStep) v += 0.1f;  // keep the kink out of the stencil
    }
    const Tensor r = random_tensor(input.shape(), gen);
    const Tensor g = relu_backward(relu(input), r);
    auto objective = [&] { return dot(relu(input), r); };
    for (std::size_t i = 0; i < input.size(); ++i) check("relu", objective, input.data()[i], g.data()[i]);
  }

  for (int n = 0; n < kInstances; ++n) {
    Tensor input = random_tensor({2, 3, 4}, gen, -4.0f, 4.0f);
    const Tensor r = random_tensor(input.shape(), gen);
    const Tensor g = sigmoid_backward(sigmoid(input), r);
    auto objective = [&] {
      double s = 0.0;
      for (std::size_t i = 0; i < input.size(); ++i) s += r.data()[i] / (1.0 + std::exp(-double{input.data()[i]}));
      return s;
    };
    for (std::size_t i = 0; i < input.size(); ++i) check("sigmoid", objective, input.data()[i], g.data()[i], 1e-3);
  }

  for (int n = 0; n < kInstances; ++n) {
    Tensor p = random_tensor({1, 3, 4}, gen, 0.05f, 0.95f);
    Tensor y = random_tensor({1, 3, 4}, gen, 0.0f, 1.0f);
    for (float& v : y.values()) v = v < 0.5f ? 0.0f : 1.0f;
    const LossResult loss = bce_loss(p, y);
    auto objective = [&] { return bce_loss(p, y).loss; };
    for (std::size_t i = 0; i < p.size(); ++i) check("bce", objective, p.data()[i], loss.grad.data()[i]);
  }

  // Whole network: every convolution, sampled weights, double-precision objective.
  // ReLUs and max-pools make it piecewise smooth: the step shrinks until both
  // one-sided slopes agree.
  for (int n = 0; n < kInstances; ++n) {
    ModelSpec spec = fcn_pose_spec();
    const std::size_t widths[] = {4, 3, 3, 2, 2, 2, 3, 3, 4, 9};
    std::size_t prev = 3, c = 0;
    for (LayerSpec& layer : spec.layers) {
      if (layer.kind == LayerKind::conv) {
        layer.in_channels = prev;
        layer.out_channels = widths[c++];
      } else {
        layer.in_channels = layer.out_channels = prev;
      }
      prev = layer.out_channels;
    }
    ModelWeights weights = init_weights(spec, kSeed + n);
    for (ConvKernel& k : weights.kernels)
      for (float& b : k.biases) b = std::uniform_real_distribution<float>(-0.1f, 0.1f)(gen);
    const Tensor image = random_tensor({3, 32, 32}, gen, 0.0f, 1.0f);
    Tensor target({9, 32, 32});
    for (float& v : target.values()) v = gen() % 5 == 0 ? 1.0f : 0.0f;

    const ForwardTrace trace = forward_trace(spec, weights, image);
    const Tensor& pred = trace.activations.back();
    Tensor logit_grad(pred.shape());
    for (std::size_t i = 0; i < pred.size(); ++i) {
      logit_grad.data()[i] = (pred.data()[i] - target.data()[i]) / static_cast<float>(pred.size());
    }
    ModelWeights grads = zero_like(weights);
    backward(spec, weights, trace, logit_grad, grads);

    std::vector<oracle::Layer> layers;
    std::size_t conv = 0;
    for (const LayerSpec& l : spec.layers) {
      oracle::Layer o;
      if (l.kind == LayerKind::conv) {
        o.out = l.out_channels;
        o.activation = static_cast<int>(l.activation);
        o.w = weights.kernels[conv].weights.data();
        o.b = weights.kernels[conv].biases.data();
        ++conv;
      } else {
        o.kind = l.kind == LayerKind::maxpool ? oracle::Layer::pool : oracle::Layer::upsample;
        o.factor = l.factor;
      }
      layers.push_back(o);
    }
    const std::vector<double> input_d(image.values().begin(), image.values().end());
    const std::vector<float> target_f(target.values().begin(), target.values().end());
    auto loss = [&] { return oracle::bce(oracle::forward(layers, input_d, 3, 32, 32), target_f); };
    double scale = 0.0;
    for (const ConvKernel& g : grads.kernels)
      for (float v : g.weights.values()) scale = std::max(scale, static_cast<double>(std::abs(v)));
    const double floor = 1e-2 * scale;
    for (std::size_t k = 0; k < weights.kernels.size(); ++k) {
      const std::size_t i = gen() % weights.kernels[k].weights.size();
      const double fd = oracle::piecewise_central_difference(loss, weights.kernels[k].weights.data()[i],
                                                             kNetworkStep, kTolerance, floor);
      const double err = oracle::relative_error(grads.kernels[k].weights.data()[i], fd, floor);
      worst["network"] = std::max(worst["network"], err);
    }
  }
  return worst;
}

Outcome criterion_gradients() {
  Outcome out;
  const auto t0 = Clock::now();
  std::string listing;
  for (const auto& [layer, err] : gradient_errors()) {
    out.require(err <= kTolerance, layer + " error " + fmt("%.3g", err));
    listing += (listing.empty() ? "" : " ") + layer + ":" + fmt("%.1e", err);
  }
  const double s = seconds_since(t0);
  out.require(s < 60.0, "runtime " + fmt("%.1f s", s));
  out.note(std::to_string(kInstances) + " instances per layer; worst " + listing + "; " + fmt("%.1f s", s));
  return out;
}

// --------------------------------------------------------------------- 9 --

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(line);
  std::string part;
  while (std::getline(ss, part, sep)) parts.push_back(part);
  return parts;
}

Outcome criterion_sweep(Context& ctx) {
  Outcome out;
  ensure_dataset(ctx);
  double baseline_seconds = ctx.baseline_seconds;
  if (!ctx.have_baseline) {
    TrainConfig config;
    config.seed = kSeed;
    const auto t0 = Clock::now();
    ctx.baseline = train(build_fcn_pose(kSeed), ctx.train_set, ctx.val_set, config).model;
    baseline_seconds = seconds_since(t0);
    ctx.have_baseline = true;
    save_model(ctx.baseline, ctx.work / "baseline.fcnp");
  }
  const fs::path dir = ctx.work / "sweep";
  fs::remove_all(dir);
  const auto t0 = Clock::now();
  const int code = run_command(std::string(FCNPOSE_CLI) + " sweep --seed " + std::to_string(kSeed) + " --data " +
                               ctx.data.string() + " --model " + (ctx.work / "baseline.fcnp").string() +
                               " --rates 0,30,50,70,90 --out " + dir.string());
  const double s = seconds_since(t0) + baseline_seconds;
  out.require(code == 0, "sweep exited with " + std::to_string(code));
  if (code != 0) return out;

  std::istringstream csv(slurp(dir / "sweep.csv"));
  std::string line;
  std::getline(csv, line);
  out.require(line == kSweepCsvHeader, "CSV header '" + line + "'");
  std::map<int, double> pck;
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    const auto cells = split(line, ',');
    ++rows;
    out.require(cells.size() == split(kSweepCsvHeader, ',').size(), "CSV row width: " + line);
    if (cells.size() < 2) continue;
    try {
      for (const auto& cell : cells) {
        std::size_t used = 0;
        std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
      }
      pck[static_cast<int>(std::lround(std::stod(cells[0]) * 100))] = std::stod(cells[1]);
    } catch (const std::exception&) {
      out.require(false, "non-numeric CSV cell in: " + line);
    }
  }
  out.require(rows == 5 && pck.size() == 5, "CSV has " + std::to_string(rows) + " rows");
  const std::string svg = slurp(dir / "sweep.svg");
  out.require(svg.find("<svg") != std::string::npos && svg.find("</svg>") != std::string::npos, "SVG missing");
  if (pck.count(0) && pck.count(90)) {
    out.require(pck[0] - pck[90] >= 0.3, "PCK drop at 90% " + fmt("%.4f", pck[0] - pck[90]));
    std::string listing;
    for (const auto& [rate, v] : pck) listing += (listing.empty() ? "" : " ") + std::to_string(rate) + ":" + fmt("%.3f", v);
    out.note("PCK " + listing);
  }
  out.require(s <= 90 * 60, "runtime " + fmt("%.0f s", s));
  out.note("runtime " + fmt("%.0f s", s) + " including baseline training");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s <work-dir> [criteria...]\n", argv[0]);
    return 2;
  }
  Context ctx;
  ctx.work = argv[1];
  fs::create_directories(ctx.work);
  std::set<int> selected;
  for (int i = 2; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  std::ofstream report(ctx.work / "report.txt", std::ios::trunc);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"architecture identity", criterion_architecture},
      {"pruning table identity", criterion_pruning_table},
      {"clustering oracle", criterion_clustering},
      {"fp16 codec", criterion_fp16},
      {"desk-scale learning", [&] { return criterion_learning(ctx); }},
      {"throughput gain", [&] { return criterion_throughput(ctx); }},
      {"storage", criterion_storage},
      {"gradient correctness", criterion_gradients},
      {"end-to-end sweep", [&] { return criterion_sweep(ctx); }},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(number)) continue;
    Outcome outcome;
    try {
      outcome = criteria[i].second();
    } catch (const std::exception& e) {
      outcome.pass = false;
      outcome.detail = std::string("exception: ") + e.what();
    }
    failures += outcome.pass ? 0 : 1;
    const std::string line = std::string(outcome.pass ? "PASS" : "FAIL") + " criterion " + std::to_string(number) +
                             " (" + criteria[i].first + "): " + outcome.detail;
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
    report << line << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
