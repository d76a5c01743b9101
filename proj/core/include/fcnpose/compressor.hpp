#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "fcnpose/network.hpp"

namespace fcnpose {

struct FilterScore {
  std::size_t layer = 0;   // convolution index (0-based, in layer order)
  std::size_t filter = 0;  // output channel within that convolution
  double score = 0.0;
};

/// Normalized L1 score: mean absolute weight of each filter (biases excluded),
/// so layers with different fan-in are comparable.
std::vector<FilterScore> score_filters(const ModelWeights& weights);

struct PruningPlan {
  double rate = 0.0;
  /// Sorted kept output-channel indices for every convolution; the output
  /// convolution always keeps all of its channels.
  std::vector<std::vector<std::size_t>> kept;

  bool operator==(const PruningPlan&) const = default;
};

/// ceil((1 - rate) * n), guarded against float round-off on exact products.
std::size_t kept_filter_count(std::size_t filters, double rate);

/// Keeps the highest-scoring ceil((1 - rate) * n) filters of every hidden
/// convolution (ties to the lower index); the last convolution is untouched.
PruningPlan plan_prune(const ModelSpec& spec, const ModelWeights& weights, double rate);

/// Physically removes pruned filters and their biases, plus the matching
/// input-channel slices of the next convolution. Pool and upsample layers
/// pass channel identity through.
Model apply_prune(const Model& model, const PruningPlan& plan);

/// Plan-then-apply convenience.
Model prune_model(const Model& model, double rate, PruningPlan* plan_out = nullptr);

/// FP32 -> FP16 post-training conversion of every weight and bias. Throws
/// NumericError naming the layer if any value overflows binary16.
ModelWeights quantize_model(const ModelSpec& spec, const ModelWeights& weights);
inline Model quantize_model(const Model& model) { return {model.spec, quantize_model(model.spec, model.weights)}; }

std::string plan_to_json(const PruningPlan& plan);
PruningPlan plan_from_json(const std::string& text);
void save_plan(const PruningPlan& plan, const std::filesystem::path& path);
PruningPlan load_plan(const std::filesystem::path& path);

}  // namespace fcnpose
