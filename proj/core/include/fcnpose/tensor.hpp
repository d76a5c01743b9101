#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace fcnpose {

/// Dense float array in channels-height-width layout (optionally with a
/// leading count axis), row-major with width fastest.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, float fill = 0.0f);
  Tensor(std::vector<std::size_t> shape, std::vector<float> values);

  static Tensor chw(std::size_t channels, std::size_t height, std::size_t width, float fill = 0.0f) {
    return Tensor({channels, height, width}, fill);
  }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  // The last three axes are always (channels, height, width).
  std::size_t channels() const noexcept { return dim_from_back(3); }
  std::size_t height() const noexcept { return dim_from_back(2); }
  std::size_t width() const noexcept { return dim_from_back(1); }
  std::size_t plane() const noexcept { return height() * width(); }

  float& at(std::size_t c, std::size_t y, std::size_t x) { return values_[(c * height() + y) * width() + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return values_[(c * height() + y) * width() + x];
  }

  float* data() noexcept { return values_.data(); }
  const float* data() const noexcept { return values_.data(); }
  std::span<float> values() noexcept { return values_; }
  std::span<const float> values() const noexcept { return values_; }

  std::span<float> channel(std::size_t c) { return {values_.data() + c * plane(), plane()}; }
  std::span<const float> channel(std::size_t c) const { return {values_.data() + c * plane(), plane()}; }

  void fill(float value);
  bool all_finite() const;

  bool operator==(const Tensor&) const = default;

 private:
  std::size_t dim_from_back(std::size_t k) const noexcept {
    return shape_.size() >= k ? shape_[shape_.size() - k] : 1;
  }

  std::vector<std::size_t> shape_;
  std::vector<float> values_;
};

/// 3x3 convolution filters: weights (out, in, 3, 3) and one bias per filter.
struct ConvKernel {
  Tensor weights;
  std::vector<float> biases;

  static ConvKernel zeros(std::size_t out_channels, std::size_t in_channels);

  std::size_t out_channels() const noexcept { return weights.rank() == 4 ? weights.shape()[0] : 0; }
  std::size_t in_channels() const noexcept { return weights.rank() == 4 ? weights.shape()[1] : 0; }
  std::size_t param_count() const noexcept { return weights.size() + biases.size(); }

  /// The 9 * in_channels weights of one output filter.
  std::span<const float> filter(std::size_t o) const;

  bool operator==(const ConvKernel&) const = default;
};

inline constexpr std::size_t kKernelTaps = 9;

// Stride 1, zero "same" padding.
Tensor conv2d_forward(const Tensor& input, const ConvKernel& kernel);

struct ConvGrads {
  Tensor input_grad;
  ConvKernel kernel_grad;
};

ConvGrads conv2d_backward(const Tensor& input, const ConvKernel& kernel, const Tensor& upstream);

/// Training variant: adds the parameter gradients into `kernel_grad` and, when
/// `input_grad` is non-null, overwrites it with the input gradient.
void conv2d_backward_accumulate(const Tensor& input, const ConvKernel& kernel, const Tensor& upstream,
                                ConvKernel& kernel_grad, Tensor* input_grad);

struct PoolResult {
  Tensor output;
  /// Flat input index of the winning element for each output cell.
  std::vector<std::uint32_t> argmax;
};

/// 2x2 window, stride 2. Ties go to the first element in scan order.
PoolResult maxpool2(const Tensor& input);
Tensor maxpool2_backward(const PoolResult& forward, const std::vector<std::size_t>& input_shape,
                         const Tensor& upstream);

Tensor upsample_nearest(const Tensor& input, std::size_t factor);
Tensor upsample_nearest_backward(const Tensor& upstream, std::size_t factor);

Tensor relu(const Tensor& input);
/// `output` is the forward result; the gradient passes where it is positive.
Tensor relu_backward(const Tensor& output, const Tensor& upstream);

Tensor sigmoid(const Tensor& input);
Tensor sigmoid_backward(const Tensor& output, const Tensor& upstream);

inline constexpr double kBceEpsilon = 1e-7;

struct LossResult {
  double loss = 0.0;
  Tensor grad;  // d loss / d pred
};

/// Mean binary cross-entropy with predictions clamped to [eps, 1 - eps]. The
/// gradient is taken at the clamped prediction.
LossResult bce_loss(const Tensor& pred, const Tensor& target);

}  // namespace fcnpose
