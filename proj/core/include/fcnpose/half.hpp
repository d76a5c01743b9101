#pragma once

#include <cstdint>

namespace fcnpose {

// IEEE-754 binary16: 1 sign bit, 5 exponent bits (bias 15), 10 significand bits.
inline constexpr std::uint16_t kHalfPositiveInfinity = 0x7C00;
inline constexpr float kHalfMaxFinite = 65504.0f;

/// Round-to-nearest-even encode. Handles subnormals, overflow to +-Inf and
/// keeps NaN a (quiet) NaN with the sign preserved.
std::uint16_t fp32_to_fp16(float value);

/// Exact decode.
float fp16_to_fp32(std::uint16_t bits);

inline float round_to_fp16(float value) { return fp16_to_fp32(fp32_to_fp16(value)); }

}  // namespace fcnpose
