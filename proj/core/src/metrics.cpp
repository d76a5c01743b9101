#include "fcnpose/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "fcnpose/compressor.hpp"
#include "fcnpose/errors.hpp"
#include "parallel.hpp"

namespace fcnpose {
namespace {

double mean_of(const std::vector<double>& v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  return v.empty() ? 0.0 : sum / static_cast<double>(v.size());
}

double population_std(const std::vector<double>& v, double mean) {
  if (v.empty()) return 0.0;
  double sum = 0.0;
  for (double x : v) sum += (x - mean) * (x - mean);
  return std::sqrt(sum / static_cast<double>(v.size()));
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

void PckConfig::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ContractViolation("PCK alpha must be positive");
  if (normalization == PckNormalization::absolute_pixels && !(reference > 0.0)) {
    throw ContractViolation("PCK absolute-pixels mode needs a positive reference length");
  }
  if (normalization == PckNormalization::reference_link &&
      !(reference >= 0.0 && reference < static_cast<double>(kLinkCount) && reference == std::floor(reference))) {
    throw ContractViolation("PCK reference-link mode needs a link index in [0, " + std::to_string(kLinkCount) + ")");
  }
}

double pck_length(const KeypointSet& truth, const PckConfig& config) {
  switch (config.normalization) {
    case PckNormalization::absolute_pixels:
      return config.reference;
    case PckNormalization::reference_link: {
      const auto k = static_cast<std::size_t>(config.reference);
      return std::hypot(truth[k + 1].x - truth[k].x, truth[k + 1].y - truth[k].y);
    }
    case PckNormalization::bbox_diagonal:
      break;
  }
  double x0 = truth[0].x, x1 = truth[0].x, y0 = truth[0].y, y1 = truth[0].y;
  for (const Keypoint& p : truth) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  return std::hypot(x1 - x0, y1 - y0);
}

double pck(const std::array<Detection, kKeypointCount>& predicted, const KeypointSet& truth, const PckConfig& config) {
  config.validate();
  const double limit = config.alpha * pck_length(truth, config);
  std::size_t evaluated = 0;
  std::size_t correct = 0;
  for (std::size_t k = 0; k < kKeypointCount; ++k) {
    if (!truth[k].visible) continue;
    ++evaluated;
    if (predicted[k] && std::hypot(predicted[k]->x - truth[k].x, predicted[k]->y - truth[k].y) <= limit) ++correct;
  }
  if (evaluated == 0) throw DataError("PCK is undefined: no visible ground-truth keypoints");
  return static_cast<double>(correct) / static_cast<double>(evaluated);
}

PckSummary evaluate_pck(const Model& model, const std::vector<Sample>& samples, const EvalOptions& options) {
  options.pck.validate();
  if (samples.empty()) throw DataError("evaluate_pck: empty sample set");
  PckSummary summary;
  summary.per_image.resize(samples.size());
  detail::parallel_for(samples.size(), options.threads, [&](std::size_t i) {
    const Tensor output = forward(model, samples[i].image);
    const KeypointPrediction prediction = extract_keypoints(output, options.threshold, options.max_distance);
    summary.per_image[i] = pck(prediction.keypoints, samples[i].keypoints, options.pck);
  });
  summary.mean = mean_of(summary.per_image);
  summary.std = population_std(summary.per_image, summary.mean);
  return summary;
}

LatencyStats LatencyStats::from_samples(std::vector<double> seconds) {
  LatencyStats stats;
  stats.samples = std::move(seconds);
  stats.mean = mean_of(stats.samples);
  stats.std = population_std(stats.samples, stats.mean);
  stats.fps = stats.mean > 0.0 ? 1.0 / stats.mean : std::numeric_limits<double>::infinity();
  return stats;
}

BenchmarkResult benchmark_inference(const Model& model, const std::vector<Tensor>& images,
                                    const BenchmarkOptions& options) {
  if (options.reps == 0) throw ContractViolation("benchmark_inference: reps must be at least 1");
  if (images.empty()) throw ContractViolation("benchmark_inference: no input images");
  for (const Tensor& image : images) check_input_shape(model.spec, image);

  std::vector<double> infer;
  std::vector<double> total;
  infer.reserve(options.reps);
  total.reserve(options.reps);
  for (std::size_t r = 0; r < options.warmup + options.reps; ++r) {
    const Tensor& image = images[r % images.size()];
    const auto start = Clock::now();
    const Tensor output = forward(model, image);
    const double t_infer = seconds_since(start);
    const KeypointPrediction prediction = extract_keypoints(output, options.threshold, options.max_distance);
    const double t_total = seconds_since(start);
    if (r < options.warmup) continue;
    infer.push_back(t_infer);
    total.push_back(t_total);
  }
  return {LatencyStats::from_samples(std::move(infer)), LatencyStats::from_samples(std::move(total))};
}

double mean_fold_fps(const std::vector<LatencyStats>& folds) {
  if (folds.empty()) throw ContractViolation("mean_fold_fps: no folds");
  double sum = 0.0;
  for (const LatencyStats& f : folds) sum += f.fps;
  return sum / static_cast<double>(folds.size());
}

Accounting account(const Model& model, std::size_t height, std::size_t width) {
  Accounting a;
  a.params = count_params(model.spec);
  a.flops = count_flops(model.spec, height, width);
  a.size_bytes = model_file_size(model);
  a.payload_bytes = a.params * (model.weights.dtype == DType::fp16 ? 2 : 4);
  return a;
}

Accounting account(const std::filesystem::path& model_file, std::size_t height, std::size_t width) {
  const Model model = load_model(model_file);
  Accounting a = account(model, height, width);
  std::error_code ec;
  const auto size = std::filesystem::file_size(model_file, ec);
  if (ec) throw IoError("cannot stat " + model_file.string() + ": " + ec.message());
  a.size_bytes = static_cast<std::size_t>(size);
  return a;
}

void SweepConfig::validate() const {
  if (rates.empty()) throw ContractViolation("sweep: no pruning rates given");
  for (std::size_t i = 0; i < rates.size(); ++i) {
    if (!(rates[i] >= 0.0 && rates[i] < 1.0)) {
      throw ContractViolation("sweep: rate " + std::to_string(rates[i]) + " is outside [0, 1)");
    }
    if (i > 0 && rates[i] <= rates[i - 1]) throw ContractViolation("sweep: rates must be strictly increasing");
  }
  retrain.validate();
  eval.pck.validate();
  if (bench_images == 0) throw ContractViolation("sweep: bench_images must be at least 1");
}

SweepReport sweep(const Model& baseline, const std::vector<Sample>& train_set, const std::vector<Sample>& eval_set,
                  const SweepConfig& config, const SweepLog& log) {
  config.validate();
  if (eval_set.empty()) throw DataError("sweep: empty evaluation set");
  const std::size_t height = eval_set.front().image.height();
  const std::size_t width = eval_set.front().image.width();
  std::vector<Tensor> bench_inputs;
  for (std::size_t i = 0; i < std::min(config.bench_images, eval_set.size()); ++i) {
    bench_inputs.push_back(eval_set[i].image);
  }

  SweepReport report;
  for (double rate : config.rates) {
    try {
      SweepStage stage;
      stage.rate = rate;
      stage.model = prune_model(baseline, rate, &stage.plan);
      if (rate > 0.0) {
        if (log) log("rate " + std::to_string(rate) + ": retraining " + std::to_string(count_params(stage.model.spec)) +
                     " parameters");
        TrainResult trained = retrain_after_prune(stage.model, train_set, eval_set, config.retrain);
        stage.model = std::move(trained.model);
        stage.history = std::move(trained.history);
      }
      if (config.quantize) stage.model = quantize_model(stage.model);

      const PckSummary summary = evaluate_pck(stage.model, eval_set, config.eval);
      const BenchmarkResult bench = benchmark_inference(stage.model, bench_inputs, config.bench);
      const Accounting acc = account(stage.model, height, width);

      SweepRow row;
      row.rate = rate;
      row.pck_mean = summary.mean;
      row.pck_std = summary.std;
      row.infer_ms_mean = bench.inference.mean * 1e3;
      row.infer_ms_std = bench.inference.std * 1e3;
      row.fps_infer = bench.inference.fps;
      row.fps_total = bench.total.fps;
      row.params = acc.params;
      row.flops = acc.flops;
      row.size_bytes = acc.size_bytes;
      if (log) {
        log("rate " + std::to_string(rate) + ": pck " + std::to_string(row.pck_mean) + ", fps " +
            std::to_string(row.fps_infer) + ", params " + std::to_string(row.params));
      }
      report.rows.push_back(row);
      report.stages.push_back(std::move(stage));
    } catch (const Error& e) {
      const std::string message = "sweep at rate " + std::to_string(rate) + ": " + e.what();
      switch (e.category()) {
        case ErrorCategory::config: throw ContractViolation(message);
        case ErrorCategory::data: throw DataError(message);
        case ErrorCategory::numeric: throw NumericError(message);
        case ErrorCategory::io: throw IoError(message);
      }
      throw;
    }
  }
  return report;
}

const char* to_string(PckNormalization mode) {
  switch (mode) {
    case PckNormalization::bbox_diagonal: return "bbox-diagonal";
    case PckNormalization::reference_link: return "reference-link";
    case PckNormalization::absolute_pixels: return "absolute-pixels";
  }
  return "?";
}

PckNormalization pck_normalization_from_string(const std::string& name) {
  if (name == "bbox-diagonal") return PckNormalization::bbox_diagonal;
  if (name == "reference-link") return PckNormalization::reference_link;
  if (name == "absolute-pixels") return PckNormalization::absolute_pixels;
  throw ContractViolation("unknown PCK normalization '" + name + "'");
}

}  // namespace fcnpose
