#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fcnpose/tensor.hpp"

namespace fcnpose {

enum class LayerKind : std::uint8_t { conv = 0, maxpool = 1, upsample = 2 };
enum class Activation : std::uint8_t { none = 0, relu = 1, sigmoid = 2 };
enum class DType : std::uint8_t { fp32 = 0, fp16 = 1 };

struct LayerSpec {
  LayerKind kind = LayerKind::conv;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t factor = 1;  // upsample only
  Activation activation = Activation::none;

  bool operator==(const LayerSpec&) const = default;
};

struct ModelSpec {
  std::vector<LayerSpec> layers;

  std::size_t input_channels() const;
  std::size_t output_channels() const;
  std::size_t conv_count() const;
  /// Indices into `layers` of the convolutions, in order.
  std::vector<std::size_t> conv_layer_indices() const;

  /// Throws ContractViolation if the channel chain or activation rules are broken.
  void validate() const;

  bool operator==(const ModelSpec&) const = default;
};

/// One kernel per convolution, in layer order. When `dtype` is fp16 every
/// value is exactly representable in binary16; compute is always fp32.
struct ModelWeights {
  std::vector<ConvKernel> kernels;
  DType dtype = DType::fp32;

  std::size_t param_count() const;
  bool operator==(const ModelWeights&) const = default;
};

struct Model {
  ModelSpec spec;
  ModelWeights weights;

  bool operator==(const Model&) const = default;
};

inline constexpr std::size_t kKeypointCount = 8;
inline constexpr std::size_t kOutputChannels = kKeypointCount + 1;
/// Five 2x2 pools: inputs must be a multiple of this on both axes.
inline constexpr std::size_t kSpatialDivisor = 32;

/// The FCN-Pose layer table: convs 128,64,32,16,8 each followed by a pool,
/// then convs 8,16,32,64 each followed by an upsample (x2,x2,x2,x4), then
/// the 9-channel sigmoid output conv.
ModelSpec fcn_pose_spec();

/// Glorot-uniform weights (fan_in = 9*in, fan_out = 9*out), zero biases.
ModelWeights init_weights(const ModelSpec& spec, std::uint64_t seed);

Model build_fcn_pose(std::uint64_t seed);

/// Conv layer parameter counts in order.
std::vector<std::size_t> conv_param_counts(const ModelSpec& spec);
std::size_t count_params(const ModelSpec& spec);
/// Dense-convolution FLOPs: per conv 2*H*W*out*(9*in) multiply-adds plus H*W*out bias adds.
std::uint64_t count_flops(const ModelSpec& spec, std::size_t input_h, std::size_t input_w);

struct LayerShape {
  std::size_t channels, height, width;
  bool operator==(const LayerShape&) const = default;
};
/// Output shape of every layer for an input of (input_channels, h, w).
std::vector<LayerShape> layer_output_shapes(const ModelSpec& spec, std::size_t input_h, std::size_t input_w);

void check_input_shape(const ModelSpec& spec, const Tensor& image);
void check_weights(const ModelSpec& spec, const ModelWeights& weights);

/// Inference: (3,H,W) -> (9,H,W), values in (0,1).
Tensor forward(const ModelSpec& spec, const ModelWeights& weights, const Tensor& image);
inline Tensor forward(const Model& model, const Tensor& image) {
  return forward(model.spec, model.weights, image);
}

/// Intermediate state kept by a training forward pass.
struct ForwardTrace {
  std::vector<Tensor> activations;  // activations[i] is the input of layer i; back() is the output
  std::vector<PoolResult> pools;    // one per maxpool layer, in order
  /// Output-layer pre-activations, kept so the loss gradient can skip the sigmoid saturation.
  Tensor logits;
};

ForwardTrace forward_trace(const ModelSpec& spec, const ModelWeights& weights, const Tensor& image);

/// Backpropagates `logit_grad` (d loss / d output pre-activation) through the
/// network and adds parameter gradients into `grads`.
void backward(const ModelSpec& spec, const ModelWeights& weights, const ForwardTrace& trace,
              const Tensor& logit_grad, ModelWeights& grads);

ModelWeights zero_like(const ModelWeights& weights);

// Model file: "FCNP", u16 version, u8 dtype, u16 layer count, layer records,
// then conv payloads (weights then biases). All little-endian.
inline constexpr char kModelMagic[4] = {'F', 'C', 'N', 'P'};
inline constexpr std::uint16_t kModelFormatVersion = 1;
inline constexpr std::size_t kModelHeaderBytes = 4 + 2 + 1 + 2;
inline constexpr std::size_t kModelLayerRecordBytes = 1 + 2 + 2 + 1 + 1;

std::size_t model_file_size(const Model& model);
std::vector<std::uint8_t> serialize_model(const Model& model);
Model deserialize_model(const std::vector<std::uint8_t>& bytes);

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

const char* to_string(DType dtype);

}  // namespace fcnpose
