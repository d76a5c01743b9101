#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "fcnpose/compressor.hpp"
#include "fcnpose/dataset.hpp"
#include "fcnpose/network.hpp"
#include "fcnpose/postprocess.hpp"
#include "fcnpose/trainer.hpp"

namespace fcnpose {

enum class PckNormalization {
  bbox_diagonal,    // diagonal of the ground-truth keypoint bounding box
  reference_link,   // ground-truth length of link `reference` (keypoint k to k+1)
  absolute_pixels,  // `reference` pixels
};

struct PckConfig {
  double alpha = 0.5;
  PckNormalization normalization = PckNormalization::bbox_diagonal;
  double reference = 0.0;

  void validate() const;
};

/// Normalization length for one ground-truth pose.
double pck_length(const KeypointSet& truth, const PckConfig& config);

/// Fraction of visible ground-truth keypoints whose prediction lies within
/// alpha * length (inclusive). Missing detections count as wrong.
double pck(const std::array<Detection, kKeypointCount>& predicted, const KeypointSet& truth, const PckConfig& config);

struct PckSummary {
  std::vector<double> per_image;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

struct EvalOptions {
  PckConfig pck;
  float threshold = kDefaultThreshold;
  double max_distance = kDefaultClusterDistance;
  std::size_t threads = 1;
};

/// Forward + postprocess + PCK on every sample. Parallel per image; the
/// reduction runs in sample order and results do not depend on `threads`.
PckSummary evaluate_pck(const Model& model, const std::vector<Sample>& samples, const EvalOptions& options);

struct LatencyStats {
  std::vector<double> samples;  // seconds
  double mean = 0.0;
  double std = 0.0;
  double fps = 0.0;  // 1 / mean

  static LatencyStats from_samples(std::vector<double> seconds);
};

struct BenchmarkResult {
  LatencyStats inference;  // forward pass only
  LatencyStats total;      // forward pass plus keypoint extraction
};

struct BenchmarkOptions {
  std::size_t warmup = 5;
  std::size_t reps = 50;
  float threshold = kDefaultThreshold;
  double max_distance = kDefaultClusterDistance;
};

/// Single-threaded wall-clock timing; run r uses images[r % size]. Warmup runs
/// are not recorded.
BenchmarkResult benchmark_inference(const Model& model, const std::vector<Tensor>& images,
                                    const BenchmarkOptions& options = {});

/// Mean of per-fold FPS values (not 1 / mean of fold times).
double mean_fold_fps(const std::vector<LatencyStats>& folds);

struct Accounting {
  std::size_t params = 0;
  std::uint64_t flops = 0;
  std::size_t size_bytes = 0;     // whole file
  std::size_t payload_bytes = 0;  // weights and biases only
};

Accounting account(const Model& model, std::size_t height, std::size_t width);
/// Reads the model file; size_bytes is the on-disk byte count.
Accounting account(const std::filesystem::path& model_file, std::size_t height, std::size_t width);

struct SweepRow {
  double rate = 0.0;
  double pck_mean = 0.0;
  double pck_std = 0.0;
  double infer_ms_mean = 0.0;
  double infer_ms_std = 0.0;
  double fps_infer = 0.0;
  double fps_total = 0.0;
  std::size_t params = 0;
  std::uint64_t flops = 0;
  std::size_t size_bytes = 0;
};

struct SweepConfig {
  std::vector<double> rates{0.0, 0.3, 0.5, 0.7, 0.9};
  TrainConfig retrain;  // max_epochs defaults to the retraining budget
  bool quantize = true;
  EvalOptions eval;
  BenchmarkOptions bench;
  std::size_t bench_images = 8;  // taken from the front of the evaluation set

  SweepConfig() { retrain.max_epochs = kRetrainEpochs; }
  void validate() const;
};

struct SweepStage {
  double rate = 0.0;
  Model model;  // as evaluated (pruned, retrained, optionally quantized)
  PruningPlan plan;
  TrainHistory history;  // empty for rate 0
};

struct SweepReport {
  std::vector<SweepRow> rows;  // ordered by rate
  std::vector<SweepStage> stages;
};

using SweepLog = std::function<void(const std::string&)>;

/// For each rate: prune the baseline -> retrain -> optionally quantize ->
/// PCK on `eval_set` -> benchmark -> account. Retraining early-stops on
/// `eval_set`. Rate 0 evaluates the baseline without retraining. Errors are
/// rethrown annotated with the failing rate.
SweepReport sweep(const Model& baseline, const std::vector<Sample>& train_set, const std::vector<Sample>& eval_set,
                  const SweepConfig& config, const SweepLog& log = {});

inline constexpr const char* kSweepCsvHeader =
    "rate,pck_mean,pck_std,infer_ms_mean,infer_ms_std,fps_infer,fps_total,params,flops,size_bytes";

std::string sweep_csv(const std::vector<SweepRow>& rows);
/// PCK and FPS normalized by the fastest row against rate, plus PCK against
/// normalized FPS.
std::string sweep_svg(const std::vector<SweepRow>& rows);
void write_text(const std::filesystem::path& path, const std::string& text);

const char* to_string(PckNormalization mode);
PckNormalization pck_normalization_from_string(const std::string& name);

}  // namespace fcnpose
