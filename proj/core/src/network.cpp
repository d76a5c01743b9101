#include "fcnpose/network.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "fcnpose/errors.hpp"
#include "fcnpose/half.hpp"
#include "fcnpose/rng.hpp"
#include "ftz.hpp"

namespace fcnpose {

std::size_t ModelSpec::input_channels() const { return layers.empty() ? 0 : layers.front().in_channels; }

std::size_t ModelSpec::output_channels() const { return layers.empty() ? 0 : layers.back().out_channels; }

std::size_t ModelSpec::conv_count() const { return conv_layer_indices().size(); }

std::vector<std::size_t> ModelSpec::conv_layer_indices() const {
  std::vector<std::size_t> indices;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].kind == LayerKind::conv) indices.push_back(i);
  }
  return indices;
}

void ModelSpec::validate() const {
  if (layers.empty()) throw ContractViolation("ModelSpec: no layers");
  std::size_t sigmoid_layer = layers.size();
  std::size_t sigmoid_count = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& layer = layers[i];
    const std::string where = "ModelSpec: layer " + std::to_string(i);
    if (layer.in_channels == 0 || layer.out_channels == 0) throw ContractViolation(where + " has zero channels");
    if (i > 0 && layer.in_channels != layers[i - 1].out_channels) {
      throw ContractViolation(where + " input channels " + std::to_string(layer.in_channels) +
                              " do not match previous output " + std::to_string(layers[i - 1].out_channels));
    }
    switch (layer.kind) {
      case LayerKind::conv:
        break;
      case LayerKind::maxpool:
      case LayerKind::upsample:
        if (layer.in_channels != layer.out_channels) throw ContractViolation(where + " changes channel count");
        if (layer.activation != Activation::none) throw ContractViolation(where + " cannot have an activation");
        if (layer.kind == LayerKind::upsample && layer.factor != 2 && layer.factor != 4) {
          throw ContractViolation(where + " has unsupported upsample factor " + std::to_string(layer.factor));
        }
        break;
      default:
        throw ContractViolation(where + " has an unknown kind");
    }
    if (layer.activation == Activation::sigmoid) {
      ++sigmoid_count;
      sigmoid_layer = i;
    }
  }
  const auto convs = conv_layer_indices();
  if (convs.empty()) throw ContractViolation("ModelSpec: no convolution layers");
  if (sigmoid_count != 1 || sigmoid_layer != convs.back()) {
    throw ContractViolation("ModelSpec: exactly one sigmoid activation is allowed, on the last convolution");
  }
}

ModelSpec fcn_pose_spec() {
  ModelSpec spec;
  auto conv = [&spec](std::size_t in, std::size_t out, Activation act) {
    spec.layers.push_back({LayerKind::conv, in, out, 1, act});
  };
  auto pool = [&spec](std::size_t ch) { spec.layers.push_back({LayerKind::maxpool, ch, ch, 1, Activation::none}); };
  auto up = [&spec](std::size_t ch, std::size_t factor) {
    spec.layers.push_back({LayerKind::upsample, ch, ch, factor, Activation::none});
  };

  const std::size_t encoder[] = {128, 64, 32, 16, 8};
  std::size_t in = 3;
  for (std::size_t width : encoder) {
    conv(in, width, Activation::relu);
    pool(width);
    in = width;
  }
  const std::size_t decoder[] = {8, 16, 32, 64};
  const std::size_t factors[] = {2, 2, 2, 4};
  for (std::size_t i = 0; i < 4; ++i) {
    conv(in, decoder[i], Activation::relu);
    up(decoder[i], factors[i]);
    in = decoder[i];
  }
  conv(in, kOutputChannels, Activation::sigmoid);
  return spec;
}

ModelWeights init_weights(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  ModelWeights weights;
  std::size_t conv_index = 0;
  for (const LayerSpec& layer : spec.layers) {
    if (layer.kind != LayerKind::conv) continue;
    ConvKernel kernel = ConvKernel::zeros(layer.out_channels, layer.in_channels);
    const double fan_in = static_cast<double>(kKernelTaps * layer.in_channels);
    const double fan_out = static_cast<double>(kKernelTaps * layer.out_channels);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Rng rng(child_seed(seed, 0x494E4954 /* "INIT" */, conv_index));
    for (float& w : kernel.weights.values()) w = static_cast<float>(rng.uniform(-limit, limit));
    weights.kernels.push_back(std::move(kernel));
    ++conv_index;
  }
  return weights;
}

Model build_fcn_pose(std::uint64_t seed) {
  Model model{fcn_pose_spec(), {}};
  model.weights = init_weights(model.spec, seed);
  return model;
}

std::vector<std::size_t> conv_param_counts(const ModelSpec& spec) {
  std::vector<std::size_t> counts;
  for (const LayerSpec& layer : spec.layers) {
    if (layer.kind == LayerKind::conv) {
      counts.push_back(kKernelTaps * layer.in_channels * layer.out_channels + layer.out_channels);
    }
  }
  return counts;
}

std::size_t count_params(const ModelSpec& spec) {
  std::size_t total = 0;
  for (std::size_t n : conv_param_counts(spec)) total += n;
  return total;
}

std::vector<LayerShape> layer_output_shapes(const ModelSpec& spec, std::size_t input_h, std::size_t input_w) {
  spec.validate();
  std::vector<LayerShape> shapes;
  std::size_t h = input_h;
  std::size_t w = input_w;
  for (const LayerSpec& layer : spec.layers) {
    switch (layer.kind) {
      case LayerKind::conv:
        break;
      case LayerKind::maxpool:
        if (h % 2 != 0 || w % 2 != 0) {
          throw ContractViolation("input " + std::to_string(input_h) + "x" + std::to_string(input_w) +
                                  " is not divisible by the network's pooling stride");
        }
        h /= 2;
        w /= 2;
        break;
      case LayerKind::upsample:
        h *= layer.factor;
        w *= layer.factor;
        break;
    }
    shapes.push_back({layer.out_channels, h, w});
  }
  return shapes;
}

std::uint64_t count_flops(const ModelSpec& spec, std::size_t input_h, std::size_t input_w) {
  const auto shapes = layer_output_shapes(spec, input_h, input_w);
  std::uint64_t flops = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& layer = spec.layers[i];
    if (layer.kind != LayerKind::conv) continue;
    const std::uint64_t outputs = static_cast<std::uint64_t>(shapes[i].height) * shapes[i].width * layer.out_channels;
    flops += 2 * outputs * kKernelTaps * layer.in_channels + outputs;
  }
  return flops;
}

void check_input_shape(const ModelSpec& spec, const Tensor& image) {
  if (image.rank() != 3 || image.channels() != spec.input_channels()) {
    throw ContractViolation("forward: expected a (" + std::to_string(spec.input_channels()) +
                            ",H,W) image, got channels=" + std::to_string(image.channels()) +
                            " rank=" + std::to_string(image.rank()));
  }
  const auto shapes = layer_output_shapes(spec, image.height(), image.width());
  if (shapes.back().height != image.height() || shapes.back().width != image.width()) {
    throw ContractViolation("forward: input " + std::to_string(image.height()) + "x" +
                            std::to_string(image.width()) + " does not map back to its own resolution");
  }
}

void check_weights(const ModelSpec& spec, const ModelWeights& weights) {
  const auto convs = spec.conv_layer_indices();
  if (weights.kernels.size() != convs.size()) {
    throw ContractViolation("weights hold " + std::to_string(weights.kernels.size()) + " kernels for " +
                            std::to_string(convs.size()) + " convolutions");
  }
  for (std::size_t k = 0; k < convs.size(); ++k) {
    const LayerSpec& layer = spec.layers[convs[k]];
    const ConvKernel& kernel = weights.kernels[k];
    if (kernel.out_channels() != layer.out_channels || kernel.in_channels() != layer.in_channels ||
        kernel.biases.size() != layer.out_channels) {
      throw ContractViolation("kernel " + std::to_string(k) + " does not match its layer spec");
    }
  }
}

namespace {

Tensor apply_layer(const LayerSpec& layer, const ConvKernel* kernel, const Tensor& input, PoolResult* pool,
                   Tensor* logits) {
  switch (layer.kind) {
    case LayerKind::conv: {
      Tensor z = conv2d_forward(input, *kernel);
      switch (layer.activation) {
        case Activation::relu:
          for (float& v : z.values()) v = v > 0.0f ? v : 0.0f;
          return z;
        case Activation::sigmoid:
          if (logits != nullptr) *logits = z;
          return sigmoid(z);
        case Activation::none:
          return z;
      }
      return z;
    }
    case LayerKind::maxpool: {
      PoolResult result = maxpool2(input);
      Tensor out = std::move(result.output);
      if (pool != nullptr) {
        pool->argmax = std::move(result.argmax);
        pool->output = out;
      }
      return out;
    }
    case LayerKind::upsample:
      return upsample_nearest(input, layer.factor);
  }
  throw ContractViolation("forward: unknown layer kind");
}

}  // namespace

Tensor forward(const ModelSpec& spec, const ModelWeights& weights, const Tensor& image) {
  const detail::FlushDenormals ftz;
  check_weights(spec, weights);
  check_input_shape(spec, image);
  Tensor x = image;
  std::size_t conv_index = 0;
  for (const LayerSpec& layer : spec.layers) {
    const ConvKernel* kernel = layer.kind == LayerKind::conv ? &weights.kernels[conv_index++] : nullptr;
    x = apply_layer(layer, kernel, x, nullptr, nullptr);
  }
  return x;
}

ForwardTrace forward_trace(const ModelSpec& spec, const ModelWeights& weights, const Tensor& image) {
  const detail::FlushDenormals ftz;
  check_weights(spec, weights);
  check_input_shape(spec, image);
  ForwardTrace trace;
  trace.activations.reserve(spec.layers.size() + 1);
  trace.activations.push_back(image);
  std::size_t conv_index = 0;
  for (const LayerSpec& layer : spec.layers) {
    const ConvKernel* kernel = layer.kind == LayerKind::conv ? &weights.kernels[conv_index++] : nullptr;
    PoolResult* pool = nullptr;
    if (layer.kind == LayerKind::maxpool) pool = &trace.pools.emplace_back();
    trace.activations.push_back(apply_layer(layer, kernel, trace.activations.back(), pool, &trace.logits));
  }
  return trace;
}

void backward(const ModelSpec& spec, const ModelWeights& weights, const ForwardTrace& trace,
              const Tensor& logit_grad, ModelWeights& grads) {
  const detail::FlushDenormals ftz;
  check_weights(spec, grads);
  if (trace.activations.size() != spec.layers.size() + 1) {
    throw ContractViolation("backward: trace does not match the model");
  }
  std::size_t conv_index = weights.kernels.size();
  std::size_t pool_index = trace.pools.size();
  Tensor grad;
  bool at_output = true;
  for (std::size_t i = spec.layers.size(); i-- > 0;) {
    const LayerSpec& layer = spec.layers[i];
    const Tensor& input = trace.activations[i];
    const Tensor& output = trace.activations[i + 1];
    const bool need_input_grad = i > 0;
    switch (layer.kind) {
      case LayerKind::conv: {
        --conv_index;
        Tensor pre_grad;
        if (at_output) {
          if (layer.activation != Activation::sigmoid) {
            throw ContractViolation("backward: the output layer must be the sigmoid convolution");
          }
          pre_grad = logit_grad;
        } else if (layer.activation == Activation::relu) {
          pre_grad = std::move(grad);
          for (std::size_t j = 0; j < pre_grad.size(); ++j) {
            if (!(output.data()[j] > 0.0f)) pre_grad.data()[j] = 0.0f;
          }
        } else if (layer.activation == Activation::sigmoid) {
          pre_grad = sigmoid_backward(output, grad);
        } else {
          pre_grad = std::move(grad);
        }
        Tensor input_grad;
        conv2d_backward_accumulate(input, weights.kernels[conv_index], pre_grad, grads.kernels[conv_index],
                                   need_input_grad ? &input_grad : nullptr);
        grad = std::move(input_grad);
        break;
      }
      case LayerKind::maxpool:
        --pool_index;
        grad = maxpool2_backward(trace.pools[pool_index], input.shape(), grad);
        break;
      case LayerKind::upsample:
        grad = upsample_nearest_backward(grad, layer.factor);
        break;
    }
    at_output = false;
  }
}

ModelWeights zero_like(const ModelWeights& weights) {
  ModelWeights zeros;
  zeros.dtype = DType::fp32;
  for (const ConvKernel& k : weights.kernels) zeros.kernels.push_back(ConvKernel::zeros(k.out_channels(), k.in_channels()));
  return zeros;
}

std::size_t ModelWeights::param_count() const {
  std::size_t n = 0;
  for (const ConvKernel& k : kernels) n += k.param_count();
  return n;
}

const char* to_string(DType dtype) { return dtype == DType::fp16 ? "fp16" : "fp32"; }

// ---------------------------------------------------------------------------
// Serialization

namespace {

class ByteWriter {
 public:
  explicit ByteWriter(std::size_t reserve) { bytes_.reserve(reserve); }

  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) {
    bytes_.push_back(static_cast<std::uint8_t>(v & 0xFF));
    bytes_.push_back(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void raw(const char* data, std::size_t n) { bytes_.insert(bytes_.end(), data, data + n); }

  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    const auto v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  bool match(const char* expected, std::size_t n) {
    need(n);
    const bool ok = std::memcmp(bytes_.data() + pos_, expected, n) == 0;
    pos_ += n;
    return ok;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw ParseError(ParseErrorKind::truncated,
                       "model file truncated at byte " + std::to_string(pos_) + " (needed " + std::to_string(n) +
                           " more)");
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

std::uint16_t checked_u16(std::size_t value, const char* what) {
  if (value > 0xFFFF) throw ContractViolation(std::string("model file: ") + what + " exceeds 16 bits");
  return static_cast<std::uint16_t>(value);
}

}  // namespace

std::size_t model_file_size(const Model& model) {
  const std::size_t value_bytes = model.weights.dtype == DType::fp16 ? 2 : 4;
  return kModelHeaderBytes + kModelLayerRecordBytes * model.spec.layers.size() +
         value_bytes * model.weights.param_count();
}

std::vector<std::uint8_t> serialize_model(const Model& model) {
  model.spec.validate();
  check_weights(model.spec, model.weights);
  ByteWriter out(model_file_size(model));
  out.raw(kModelMagic, 4);
  out.u16(kModelFormatVersion);
  out.u8(static_cast<std::uint8_t>(model.weights.dtype));
  out.u16(checked_u16(model.spec.layers.size(), "layer count"));
  for (const LayerSpec& layer : model.spec.layers) {
    out.u8(static_cast<std::uint8_t>(layer.kind));
    out.u16(checked_u16(layer.in_channels, "in_channels"));
    out.u16(checked_u16(layer.out_channels, "out_channels"));
    if (layer.factor > 0xFF) throw ContractViolation("model file: upsample factor exceeds 8 bits");
    out.u8(static_cast<std::uint8_t>(layer.factor));
    out.u8(static_cast<std::uint8_t>(layer.activation));
  }
  const bool half = model.weights.dtype == DType::fp16;
  auto put = [&](float v) {
    if (half) {
      const std::uint16_t bits = fp32_to_fp16(v);
      if (std::bit_cast<std::uint32_t>(fp16_to_fp32(bits)) != std::bit_cast<std::uint32_t>(v)) {
        throw ContractViolation("model file: fp16-tagged weights hold a value not representable in binary16");
      }
      out.u16(bits);
    } else {
      out.u32(std::bit_cast<std::uint32_t>(v));
    }
  };
  for (const ConvKernel& kernel : model.weights.kernels) {
    for (float w : kernel.weights.values()) put(w);
    for (float b : kernel.biases) put(b);
  }
  return out.take();
}

Model deserialize_model(const std::vector<std::uint8_t>& bytes) {
  ByteReader in(bytes);
  if (!in.match(kModelMagic, 4)) throw ParseError(ParseErrorKind::bad_magic, "not a model file (bad magic)");
  const std::uint16_t version = in.u16();
  if (version != kModelFormatVersion) {
    throw ParseError(ParseErrorKind::bad_version, "unsupported model format version " + std::to_string(version));
  }
  const std::uint8_t dtype = in.u8();
  if (dtype > 1) throw ParseError(ParseErrorKind::bad_value, "unknown dtype tag " + std::to_string(dtype));

  Model model;
  model.weights.dtype = static_cast<DType>(dtype);
  const std::uint16_t layer_count = in.u16();
  for (std::uint16_t i = 0; i < layer_count; ++i) {
    LayerSpec layer;
    const std::uint8_t kind = in.u8();
    layer.in_channels = in.u16();
    layer.out_channels = in.u16();
    layer.factor = in.u8();
    const std::uint8_t activation = in.u8();
    if (kind > 2 || activation > 2) {
      throw ParseError(ParseErrorKind::bad_value, "layer " + std::to_string(i) + " has an unknown kind or activation");
    }
    layer.kind = static_cast<LayerKind>(kind);
    layer.activation = static_cast<Activation>(activation);
    model.spec.layers.push_back(layer);
  }
  try {
    model.spec.validate();
  } catch (const ContractViolation& e) {
    throw ParseError(ParseErrorKind::bad_value, std::string("invalid layer table: ") + e.what());
  }

  const bool half = model.weights.dtype == DType::fp16;
  auto get = [&]() -> float {
    const float v = half ? fp16_to_fp32(in.u16()) : std::bit_cast<float>(in.u32());
    if (!std::isfinite(v)) throw ParseError(ParseErrorKind::bad_value, "model payload holds a non-finite value");
    return v;
  };
  for (const LayerSpec& layer : model.spec.layers) {
    if (layer.kind != LayerKind::conv) continue;
    ConvKernel kernel = ConvKernel::zeros(layer.out_channels, layer.in_channels);
    for (float& w : kernel.weights.values()) w = get();
    for (float& b : kernel.biases) b = get();
    model.weights.kernels.push_back(std::move(kernel));
  }
  if (in.remaining() != 0) {
    throw ParseError(ParseErrorKind::trailing_bytes,
                     std::to_string(in.remaining()) + " unexpected bytes after the model payload");
  }
  return model;
}

void save_model(const Model& model, const std::filesystem::path& path) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed reading " + path.string());
  return deserialize_model(bytes);
}

}  // namespace fcnpose
