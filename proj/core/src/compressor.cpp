#include "fcnpose/compressor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "fcnpose/errors.hpp"
#include "fcnpose/half.hpp"

namespace fcnpose {

std::vector<FilterScore> score_filters(const ModelWeights& weights) {
  std::vector<FilterScore> scores;
  for (std::size_t layer = 0; layer < weights.kernels.size(); ++layer) {
    const ConvKernel& kernel = weights.kernels[layer];
    for (std::size_t o = 0; o < kernel.out_channels(); ++o) {
      const auto filter = kernel.filter(o);
      double sum = 0.0;
      for (float w : filter) sum += std::abs(static_cast<double>(w));
      scores.push_back({layer, o, filter.empty() ? 0.0 : sum / static_cast<double>(filter.size())});
    }
  }
  return scores;
}

std::size_t kept_filter_count(std::size_t filters, double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ContractViolation("pruning rate must lie in [0, 1)");
  const double keep = (1.0 - rate) * static_cast<double>(filters);
  const auto kept = static_cast<std::size_t>(std::ceil(keep - 1e-9));
  return std::clamp<std::size_t>(kept, filters == 0 ? 0 : 1, filters);
}

PruningPlan plan_prune(const ModelSpec& spec, const ModelWeights& weights, double rate) {
  spec.validate();
  check_weights(spec, weights);
  if (!(rate >= 0.0 && rate < 1.0)) throw ContractViolation("plan_prune: rate must lie in [0, 1)");

  const auto scores = score_filters(weights);
  PruningPlan plan;
  plan.rate = rate;
  std::size_t offset = 0;
  for (std::size_t layer = 0; layer < weights.kernels.size(); ++layer) {
    const std::size_t n = weights.kernels[layer].out_channels();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const bool output_layer = layer + 1 == weights.kernels.size();
    const std::size_t keep = output_layer ? n : kept_filter_count(n, rate);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return scores[offset + a].score > scores[offset + b].score;
    });
    order.resize(keep);
    std::sort(order.begin(), order.end());
    plan.kept.push_back(std::move(order));
    offset += n;
  }
  return plan;
}

Model apply_prune(const Model& model, const PruningPlan& plan) {
  model.spec.validate();
  check_weights(model.spec, model.weights);
  const auto convs = model.spec.conv_layer_indices();
  if (plan.kept.size() != convs.size()) {
    throw ContractViolation("apply_prune: plan covers " + std::to_string(plan.kept.size()) + " convolutions, model has " +
                            std::to_string(convs.size()));
  }
  for (std::size_t k = 0; k < convs.size(); ++k) {
    const auto& kept = plan.kept[k];
    const std::size_t n = model.spec.layers[convs[k]].out_channels;
    if (kept.empty()) throw ContractViolation("apply_prune: layer " + std::to_string(k) + " keeps no filters");
    for (std::size_t i = 0; i < kept.size(); ++i) {
      if (kept[i] >= n || (i > 0 && kept[i] <= kept[i - 1])) {
        throw ContractViolation("apply_prune: kept indices of layer " + std::to_string(k) +
                                " must be sorted, unique and in range");
      }
    }
  }
  if (plan.kept.back().size() != model.spec.layers[convs.back()].out_channels) {
    throw ContractViolation("apply_prune: the output convolution cannot be pruned");
  }

  Model pruned{model.spec, {}};
  pruned.weights.dtype = model.weights.dtype;
  // Input channel selection carried from the previous convolution.
  std::vector<std::size_t> inputs(model.spec.input_channels());
  std::iota(inputs.begin(), inputs.end(), std::size_t{0});
  std::size_t k = 0;
  for (LayerSpec& layer : pruned.spec.layers) {
    if (layer.kind != LayerKind::conv) {
      layer.in_channels = layer.out_channels = inputs.size();
      continue;
    }
    const ConvKernel& src = model.weights.kernels[k];
    const auto& outputs = plan.kept[k];
    ConvKernel dst = ConvKernel::zeros(outputs.size(), inputs.size());
    for (std::size_t o = 0; o < outputs.size(); ++o) {
      for (std::size_t c = 0; c < inputs.size(); ++c) {
        const float* from = src.weights.data() + (outputs[o] * src.in_channels() + inputs[c]) * kKernelTaps;
        std::copy_n(from, kKernelTaps, dst.weights.data() + (o * inputs.size() + c) * kKernelTaps);
      }
      dst.biases[o] = src.biases[outputs[o]];
    }
    layer.in_channels = inputs.size();
    layer.out_channels = outputs.size();
    pruned.weights.kernels.push_back(std::move(dst));
    inputs = outputs;
    ++k;
  }
  pruned.spec.validate();
  check_weights(pruned.spec, pruned.weights);
  return pruned;
}

Model prune_model(const Model& model, double rate, PruningPlan* plan_out) {
  PruningPlan plan = plan_prune(model.spec, model.weights, rate);
  Model pruned = apply_prune(model, plan);
  if (plan_out != nullptr) *plan_out = std::move(plan);
  return pruned;
}

ModelWeights quantize_model(const ModelSpec& spec, const ModelWeights& weights) {
  check_weights(spec, weights);
  ModelWeights out = weights;
  out.dtype = DType::fp16;
  auto convert = [](float& v, std::size_t layer) {
    const float q = round_to_fp16(v);
    if (!std::isfinite(q)) {
      throw NumericError("quantize_model: convolution " + std::to_string(layer) + " holds a value (" +
                         std::to_string(v) + ") outside the binary16 range");
    }
    v = q;
  };
  for (std::size_t k = 0; k < out.kernels.size(); ++k) {
    for (float& w : out.kernels[k].weights.values()) convert(w, k);
    for (float& b : out.kernels[k].biases) convert(b, k);
  }
  return out;
}

std::string plan_to_json(const PruningPlan& plan) {
  nlohmann::json doc;
  doc["rate"] = plan.rate;
  doc["kept"] = plan.kept;
  return doc.dump(1);
}

PruningPlan plan_from_json(const std::string& text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    PruningPlan plan;
    plan.rate = doc.at("rate").get<double>();
    plan.kept = doc.at("kept").get<std::vector<std::vector<std::size_t>>>();
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(ParseErrorKind::bad_value, std::string("pruning plan: ") + e.what());
  }
}

void save_plan(const PruningPlan& plan, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << plan_to_json(plan) << "\n";
}

PruningPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return plan_from_json(buffer.str());
}

}  // namespace fcnpose
