#include "fcnpose/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <numeric>
#include <string>

#include "fcnpose/errors.hpp"

namespace fcnpose {
namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

void require_chw(const Tensor& t, const char* op) {
  if (t.rank() != 3) {
    throw ContractViolation(std::string(op) + ": expected a CHW tensor, got shape " + shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ContractViolation(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                            shape_string(b.shape()));
  }
}

// Column matrix (in*9, H*W) of zero-padded 3x3 neighbourhoods.
void im2col(const Tensor& input, std::vector<float>& cols) {
  const std::size_t channels = input.channels();
  const std::size_t h = input.height();
  const std::size_t w = input.width();
  const std::size_t hw = h * w;
  cols.resize(channels * kKernelTaps * hw);
  for (std::size_t c = 0; c < channels; ++c) {
    const float* src = input.data() + c * hw;
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        float* row = cols.data() + ((c * 3 + ky) * 3 + kx) * hw;
        for (std::size_t y = 0; y < h; ++y) {
          float* dst = row + y * w;
          const std::size_t sy = y + ky;  // offset by the one-pixel border
          if (sy == 0 || sy > h) {
            std::fill_n(dst, w, 0.0f);
            continue;
          }
          const float* src_row = src + (sy - 1) * w;
          if (kx == 0) {
            dst[0] = 0.0f;
            std::memcpy(dst + 1, src_row, (w - 1) * sizeof(float));
          } else if (kx == 1) {
            std::memcpy(dst, src_row, w * sizeof(float));
          } else {
            std::memcpy(dst, src_row + 1, (w - 1) * sizeof(float));
            dst[w - 1] = 0.0f;
          }
        }
      }
    }
  }
}

std::vector<float>& scratch_columns() {
  thread_local std::vector<float> buffer;
  return buffer;
}

void check_conv_shapes(const Tensor& input, const ConvKernel& kernel, const char* op) {
  require_chw(input, op);
  if (kernel.weights.rank() != 4 || kernel.weights.shape()[2] != 3 || kernel.weights.shape()[3] != 3) {
    throw ContractViolation(std::string(op) + ": kernel weights must be (out,in,3,3), got " +
                            shape_string(kernel.weights.shape()));
  }
  if (kernel.biases.size() != kernel.out_channels()) {
    throw ContractViolation(std::string(op) + ": bias count does not match out_channels");
  }
  if (input.channels() != kernel.in_channels()) {
    throw ContractViolation(std::string(op) + ": input has " + std::to_string(input.channels()) +
                            " channels, kernel expects " + std::to_string(kernel.in_channels()));
  }
}


// Convolutions with a thin channel side (the RGB input, the 9-channel head,
// narrow pruned layers) run faster as register-blocked direct loops than as
// im2col + GEMM.
constexpr std::size_t kDirectMaxChannels = 16;
constexpr std::size_t kLanes = 16;
constexpr std::size_t kOutBlock = 8;

bool use_direct_path(std::size_t out_channels, std::size_t in_channels) {
  return std::min(out_channels, in_channels) <= kDirectMaxChannels;
}

std::size_t round_up(std::size_t v, std::size_t m) { return (v + m - 1) / m * m; }

std::vector<float>& scratch_padded() {
  thread_local std::vector<float> buffer;
  return buffer;
}

std::vector<float>& scratch_packed() {
  thread_local std::vector<float> buffer;
  return buffer;
}

std::vector<float>& scratch_flipped() {
  thread_local std::vector<float> buffer;
  return buffer;
}

// Zero border of one pixel on top/left and at least one on bottom/right;
// rows are widened to a whole number of lanes plus the border.
struct PaddedView {
  std::size_t rows;
  std::size_t stride;
};

PaddedView pad_planes(const float* src, std::size_t channels, std::size_t h, std::size_t w,
                      std::size_t border, std::vector<float>& dst) {
  const PaddedView view{h + 2 * border, round_up(w, kLanes) + 2 * border};
  dst.assign(channels * view.rows * view.stride, 0.0f);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      std::copy_n(src + (c * h + y) * w, w, dst.data() + (c * view.rows + y + border) * view.stride + border);
    }
  }
  return view;
}

// 16-float SIMD vector (one AVX-512 register, or two AVX registers).
using Lanes = float __attribute__((vector_size(kLanes * sizeof(float))));

inline Lanes load_lanes(const float* p) {
  Lanes v;
  std::memcpy(&v, p, sizeof(Lanes));
  return v;
}

inline float lane_sum(Lanes v) {
  float lanes[kLanes];
  std::memcpy(lanes, &v, sizeof(Lanes));
  float sum = 0.0f;
  for (float x : lanes) sum += x;
  return sum;
}

void conv_direct(const Tensor& input, const float* weights, std::size_t out_c, const float* biases, Tensor& out) {
  const std::size_t in_c = input.channels();
  const std::size_t h = input.height();
  const std::size_t w = input.width();
  auto& padded = scratch_padded();
  const PaddedView view = pad_planes(input.data(), in_c, h, w, 1, padded);

  // Weights packed as [block][c][tap][o_in_block], zero-filled past out_c.
  const std::size_t blocks = (out_c + kOutBlock - 1) / kOutBlock;
  auto& packed = scratch_packed();
  packed.assign(blocks * in_c * kKernelTaps * kOutBlock, 0.0f);
  for (std::size_t o = 0; o < out_c; ++o) {
    for (std::size_t c = 0; c < in_c; ++c) {
      for (std::size_t k = 0; k < kKernelTaps; ++k) {
        packed[(((o / kOutBlock) * in_c + c) * kKernelTaps + k) * kOutBlock + o % kOutBlock] =
            weights[(o * in_c + c) * kKernelTaps + k];
      }
    }
  }

  for (std::size_t b = 0; b < blocks; ++b) {
    const float* wb = packed.data() + b * in_c * kKernelTaps * kOutBlock;
    const std::size_t o_count = std::min(kOutBlock, out_c - b * kOutBlock);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x0 = 0; x0 < w; x0 += kLanes) {
        Lanes acc[kOutBlock] = {};
        for (std::size_t c = 0; c < in_c; ++c) {
          const float* base = padded.data() + (c * view.rows + y) * view.stride + x0;
          const float* wc = wb + c * kKernelTaps * kOutBlock;
          for (std::size_t ky = 0; ky < 3; ++ky) {
            for (std::size_t kx = 0; kx < 3; ++kx) {
              const Lanes src = load_lanes(base + ky * view.stride + kx);
              const float* wk = wc + (ky * 3 + kx) * kOutBlock;
              for (std::size_t o = 0; o < kOutBlock; ++o) acc[o] += wk[o] * src;
            }
          }
        }
        const std::size_t n = std::min(kLanes, w - x0);
        for (std::size_t o = 0; o < o_count; ++o) {
          const std::size_t oc = b * kOutBlock + o;
          const float bias = biases != nullptr ? biases[oc] : 0.0f;
          float* dst = out.data() + (oc * h + y) * w + x0;
          const Lanes v = acc[o] + bias;
          if (n == kLanes) {
            std::memcpy(dst, &v, sizeof(Lanes));
          } else {
            for (std::size_t l = 0; l < n; ++l) dst[l] = v[l];
          }
        }
      }
    }
  }
}

// dW[o][c][tap] += sum over pixels of upstream[o] * shifted input[c].
void weight_grad_direct(const Tensor& input, const Tensor& upstream, float* weight_grad) {
  constexpr std::size_t kGradBlock = 3;
  const std::size_t in_c = input.channels();
  const std::size_t out_c = upstream.channels();
  const std::size_t h = input.height();
  const std::size_t w = input.width();
  auto& padded = scratch_padded();
  const PaddedView view = pad_planes(input.data(), in_c, h, w, 1, padded);
  // Upstream widened to whole lanes with zeros so the tail lanes contribute nothing.
  auto& dy = scratch_packed();
  const PaddedView dy_view = pad_planes(upstream.data(), out_c, h, w, 0, dy);
  // Whole blocks of zero planes keep the inner loops at fixed trip counts.
  dy.resize(round_up(out_c, kGradBlock) * dy_view.rows * dy_view.stride, 0.0f);
  const std::size_t plane = dy_view.rows * dy_view.stride;

  for (std::size_t o0 = 0; o0 < out_c; o0 += kGradBlock) {
    const std::size_t o_count = std::min(kGradBlock, out_c - o0);
    for (std::size_t c = 0; c < in_c; ++c) {
      // One kernel row per pass keeps the accumulators in registers.
      for (std::size_t ky = 0; ky < 3; ++ky) {
        Lanes acc[kGradBlock][3] = {};
        for (std::size_t y = 0; y < h; ++y) {
          const float* base = padded.data() + (c * view.rows + y + ky) * view.stride;
          const float* dy_row = dy.data() + o0 * plane + y * dy_view.stride;
          for (std::size_t x0 = 0; x0 < w; x0 += kLanes) {
            Lanes g[kGradBlock];
            for (std::size_t o = 0; o < kGradBlock; ++o) g[o] = load_lanes(dy_row + o * plane + x0);
            for (std::size_t kx = 0; kx < 3; ++kx) {
              const Lanes src = load_lanes(base + kx + x0);
              for (std::size_t o = 0; o < kGradBlock; ++o) acc[o][kx] += g[o] * src;
            }
          }
        }
        for (std::size_t o = 0; o < o_count; ++o) {
          for (std::size_t kx = 0; kx < 3; ++kx) {
            weight_grad[((o0 + o) * in_c + c) * kKernelTaps + ky * 3 + kx] += lane_sum(acc[o][kx]);
          }
        }
      }
    }
  }
}

void conv_gemm(const Tensor& input, const float* weights, std::size_t out_c, const float* biases, Tensor& out) {
  const std::size_t k = input.channels() * kKernelTaps;
  const std::size_t hw = input.plane();
  auto& cols = scratch_columns();
  im2col(input, cols);
  ConstRowMap wm(weights, static_cast<Eigen::Index>(out_c), static_cast<Eigen::Index>(k));
  ConstRowMap x(cols.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(hw));
  RowMap y(out.data(), static_cast<Eigen::Index>(out_c), static_cast<Eigen::Index>(hw));
  y.noalias() = wm * x;
  if (biases != nullptr) {
    for (std::size_t o = 0; o < out_c; ++o) y.row(static_cast<Eigen::Index>(o)).array() += biases[o];
  }
}

// `out` must already have shape (out_c, H, W).
void conv_into(const Tensor& input, const float* weights, std::size_t out_c, const float* biases, Tensor& out) {
  if (use_direct_path(out_c, input.channels())) {
    conv_direct(input, weights, out_c, biases, out);
  } else {
    conv_gemm(input, weights, out_c, biases, out);
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, float fill)
    : shape_(std::move(shape)), values_(shape_product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<float> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != shape_product(shape_)) {
    throw ContractViolation("Tensor: " + std::to_string(values_.size()) + " values do not fill shape " +
                            shape_string(shape_));
  }
}

void Tensor::fill(float value) { std::fill(values_.begin(), values_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](float v) { return std::isfinite(v); });
}

ConvKernel ConvKernel::zeros(std::size_t out_channels, std::size_t in_channels) {
  return ConvKernel{Tensor({out_channels, in_channels, 3, 3}), std::vector<float>(out_channels, 0.0f)};
}

std::span<const float> ConvKernel::filter(std::size_t o) const {
  const std::size_t n = in_channels() * kKernelTaps;
  return {weights.data() + o * n, n};
}

Tensor conv2d_forward(const Tensor& input, const ConvKernel& kernel) {
  check_conv_shapes(input, kernel, "conv2d_forward");
  Tensor out = Tensor::chw(kernel.out_channels(), input.height(), input.width());
  conv_into(input, kernel.weights.data(), kernel.out_channels(), kernel.biases.data(), out);
  return out;
}

void conv2d_backward_accumulate(const Tensor& input, const ConvKernel& kernel, const Tensor& upstream,
                                ConvKernel& kernel_grad, Tensor* input_grad) {
  check_conv_shapes(input, kernel, "conv2d_backward");
  const std::size_t out_c = kernel.out_channels();
  const std::size_t in_c = kernel.in_channels();
  if (upstream.rank() != 3 || upstream.channels() != out_c || upstream.height() != input.height() ||
      upstream.width() != input.width()) {
    throw ContractViolation("conv2d_backward: upstream gradient shape " + shape_string(upstream.shape()) +
                            " does not match the forward output");
  }
  if (kernel_grad.weights.shape() != kernel.weights.shape() || kernel_grad.biases.size() != out_c) {
    throw ContractViolation("conv2d_backward: gradient accumulator shape mismatch");
  }
  const std::size_t hw = input.plane();

  for (std::size_t o = 0; o < out_c; ++o) {
    const float* row = upstream.data() + o * hw;
    Lanes partial{};
    std::size_t i = 0;
    for (; i + kLanes <= hw; i += kLanes) partial += load_lanes(row + i);
    double sum = lane_sum(partial);
    for (; i < hw; ++i) sum += row[i];
    kernel_grad.biases[o] += static_cast<float>(sum);
  }

  if (out_c <= kDirectMaxChannels) {
    weight_grad_direct(input, upstream, kernel_grad.weights.data());
  } else {
    const auto rows_out = static_cast<Eigen::Index>(out_c);
    const auto rows_k = static_cast<Eigen::Index>(in_c * kKernelTaps);
    const auto cols_hw = static_cast<Eigen::Index>(hw);
    auto& cols = scratch_columns();
    im2col(input, cols);
    ConstRowMap dy(upstream.data(), rows_out, cols_hw);
    ConstRowMap x(cols.data(), rows_k, cols_hw);
    RowMap dw(kernel_grad.weights.data(), rows_out, rows_k);
    dw.noalias() += dy * x.transpose();
  }

  if (input_grad != nullptr) {
    // The input gradient is a same-padded convolution of the upstream gradient
    // with the kernel flipped spatially and its channel axes swapped.
    auto& flipped = scratch_flipped();
    flipped.resize(kernel.weights.size());
    for (std::size_t o = 0; o < out_c; ++o) {
      for (std::size_t c = 0; c < in_c; ++c) {
        for (std::size_t k = 0; k < kKernelTaps; ++k) {
          flipped[(c * out_c + o) * kKernelTaps + (kKernelTaps - 1 - k)] =
              kernel.weights.data()[(o * in_c + c) * kKernelTaps + k];
        }
      }
    }
    if (input_grad->shape() != input.shape()) *input_grad = Tensor(input.shape());
    conv_into(upstream, flipped.data(), in_c, nullptr, *input_grad);
  }
}

ConvGrads conv2d_backward(const Tensor& input, const ConvKernel& kernel, const Tensor& upstream) {
  check_conv_shapes(input, kernel, "conv2d_backward");
  ConvGrads grads{Tensor(input.shape()), ConvKernel::zeros(kernel.out_channels(), kernel.in_channels())};
  conv2d_backward_accumulate(input, kernel, upstream, grads.kernel_grad, &grads.input_grad);
  return grads;
}

PoolResult maxpool2(const Tensor& input) {
  require_chw(input, "maxpool2");
  const std::size_t h = input.height();
  const std::size_t w = input.width();
  if (h % 2 != 0 || w % 2 != 0) {
    throw ContractViolation("maxpool2: height and width must be even, got " + shape_string(input.shape()));
  }
  const std::size_t oh = h / 2;
  const std::size_t ow = w / 2;
  PoolResult result{Tensor::chw(input.channels(), oh, ow), {}};
  result.argmax.resize(result.output.size());
  std::size_t out_idx = 0;
  for (std::size_t c = 0; c < input.channels(); ++c) {
    const std::size_t base = c * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x, ++out_idx) {
        const std::size_t top_left = base + (2 * y) * w + 2 * x;
        const std::size_t candidates[4] = {top_left, top_left + 1, top_left + w, top_left + w + 1};
        std::size_t best = candidates[0];
        for (std::size_t i = 1; i < 4; ++i) {
          if (input.data()[candidates[i]] > input.data()[best]) best = candidates[i];
        }
        result.output.data()[out_idx] = input.data()[best];
        result.argmax[out_idx] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return result;
}

Tensor maxpool2_backward(const PoolResult& forward, const std::vector<std::size_t>& input_shape,
                         const Tensor& upstream) {
  require_same_shape(forward.output, upstream, "maxpool2_backward");
  Tensor grad(input_shape);
  if (grad.size() != forward.output.size() * 4) {
    throw ContractViolation("maxpool2_backward: input shape inconsistent with pooled output");
  }
  for (std::size_t i = 0; i < upstream.size(); ++i) {
    grad.data()[forward.argmax[i]] += upstream.data()[i];
  }
  return grad;
}

Tensor upsample_nearest(const Tensor& input, std::size_t factor) {
  require_chw(input, "upsample_nearest");
  if (factor != 2 && factor != 4) {
    throw ContractViolation("upsample_nearest: unsupported factor " + std::to_string(factor));
  }
  const std::size_t h = input.height();
  const std::size_t w = input.width();
  Tensor out = Tensor::chw(input.channels(), h * factor, w * factor);
  const std::size_t ow = w * factor;
  for (std::size_t c = 0; c < input.channels(); ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      float* first_row = &out.at(c, y * factor, 0);
      for (std::size_t x = 0; x < w; ++x) {
        std::fill_n(first_row + x * factor, factor, input.at(c, y, x));
      }
      for (std::size_t r = 1; r < factor; ++r) {
        std::copy_n(first_row, ow, first_row + r * ow);
      }
    }
  }
  return out;
}

Tensor upsample_nearest_backward(const Tensor& upstream, std::size_t factor) {
  require_chw(upstream, "upsample_nearest_backward");
  if (factor != 2 && factor != 4) {
    throw ContractViolation("upsample_nearest_backward: unsupported factor " + std::to_string(factor));
  }
  if (upstream.height() % factor != 0 || upstream.width() % factor != 0) {
    throw ContractViolation("upsample_nearest_backward: gradient not divisible by factor");
  }
  const std::size_t w = upstream.width() / factor;
  Tensor grad = Tensor::chw(upstream.channels(), upstream.height() / factor, w);
  const float* src = upstream.data();
  for (std::size_t row = 0; row < grad.channels() * grad.height(); ++row) {
    float* dst = grad.data() + row * w;
    for (std::size_t r = 0; r < factor; ++r, src += w * factor) {
      for (std::size_t x = 0; x < w; ++x) {
        float sum = 0.0f;
        for (std::size_t k = 0; k < factor; ++k) sum += src[x * factor + k];
        dst[x] += sum;
      }
    }
  }
  return grad;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (float& v : out.values()) v = v > 0.0f ? v : 0.0f;
  return out;
}

Tensor relu_backward(const Tensor& output, const Tensor& upstream) {
  require_same_shape(output, upstream, "relu_backward");
  Tensor grad = upstream;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(output.data()[i] > 0.0f)) grad.data()[i] = 0.0f;
  }
  return grad;
}

Tensor sigmoid(const Tensor& input) {
  // Clamped strictly inside (0, 1) in float.
  constexpr float lo = std::numeric_limits<float>::min();
  constexpr float hi = 1.0f - 0x1.0p-24f;
  Tensor out = input;
  for (float& v : out.values()) {
    const float e = std::exp(-std::abs(v));
    const float s = v >= 0.0f ? 1.0f / (1.0f + e) : e / (1.0f + e);
    v = std::clamp(s, lo, hi);
  }
  return out;
}

Tensor sigmoid_backward(const Tensor& output, const Tensor& upstream) {
  require_same_shape(output, upstream, "sigmoid_backward");
  Tensor grad = upstream;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const float s = output.data()[i];
    grad.data()[i] *= s * (1.0f - s);
  }
  return grad;
}

LossResult bce_loss(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "bce_loss");
  if (pred.empty()) throw ContractViolation("bce_loss: empty tensors");
  LossResult result{0.0, Tensor(pred.shape())};
  const double n = static_cast<double>(pred.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = std::clamp(static_cast<double>(pred.data()[i]), kBceEpsilon, 1.0 - kBceEpsilon);
    const double y = target.data()[i];
    if (y == 1.0) {
      sum -= std::log(p);
    } else if (y == 0.0) {
      sum -= std::log(1.0 - p);
    } else {
      sum -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    }
    result.grad.data()[i] = static_cast<float>((p - y) / (p * (1.0 - p)) / n);
  }
  result.loss = sum / n;
  return result;
}

}  // namespace fcnpose
