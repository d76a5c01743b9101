#include "fcnpose/half.hpp"

#include <bit>

namespace fcnpose {
namespace {

// Shift right by `shift` bits with round-to-nearest, ties to even.
std::uint32_t shift_round_even(std::uint32_t value, unsigned shift) {
  if (shift == 0) return value;
  if (shift > 31) return 0;
  const std::uint32_t kept = value >> shift;
  const std::uint32_t remainder = value & ((1u << shift) - 1u);
  const std::uint32_t halfway = 1u << (shift - 1);
  if (remainder > halfway || (remainder == halfway && (kept & 1u))) return kept + 1;
  return kept;
}

}  // namespace

std::uint16_t fp32_to_fp16(float value) {
  const auto bits = std::bit_cast<std::uint32_t>(value);
  const auto sign = static_cast<std::uint16_t>((bits >> 16) & 0x8000u);
  const std::uint32_t exponent = (bits >> 23) & 0xFFu;
  const std::uint32_t mantissa = bits & 0x7FFFFFu;

  if (exponent == 0xFFu) {
    if (mantissa == 0) return sign | kHalfPositiveInfinity;
    return static_cast<std::uint16_t>(sign | 0x7E00u | (mantissa >> 13));
  }

  const int half_exponent = static_cast<int>(exponent) - 127 + 15;
  if (half_exponent >= 31) return sign | kHalfPositiveInfinity;

  if (half_exponent <= 0) {
    // Subnormal (or zero) result; fp32 subnormals are far below 2^-25 and vanish.
    if (half_exponent < -10) return sign;
    const std::uint32_t significand = mantissa | 0x800000u;
    const auto shift = static_cast<unsigned>(14 - half_exponent);
    return static_cast<std::uint16_t>(sign | shift_round_even(significand, shift));
  }

  // Normal; a rounding carry may step into the exponent field or reach Inf.
  const std::uint32_t packed = (static_cast<std::uint32_t>(half_exponent) << 10) | (mantissa >> 13);
  const std::uint32_t low = mantissa & 0x1FFFu;
  std::uint32_t rounded = packed;
  if (low > 0x1000u || (low == 0x1000u && (packed & 1u))) ++rounded;
  return static_cast<std::uint16_t>(sign | rounded);
}

float fp16_to_fp32(std::uint16_t bits) {
  const std::uint32_t sign = static_cast<std::uint32_t>(bits & 0x8000u) << 16;
  const std::uint32_t exponent = (bits >> 10) & 0x1Fu;
  std::uint32_t mantissa = bits & 0x3FFu;

  if (exponent == 0x1Fu) {
    return std::bit_cast<float>(sign | 0x7F800000u | (mantissa << 13));
  }
  if (exponent == 0) {
    if (mantissa == 0) return std::bit_cast<float>(sign);
    // Normalize the subnormal into an fp32 normal.
    int e = -1;
    do {
      ++e;
      mantissa <<= 1;
    } while ((mantissa & 0x400u) == 0);
    const std::uint32_t fp32_exponent = static_cast<std::uint32_t>(127 - 15 - e);
    return std::bit_cast<float>(sign | (fp32_exponent << 23) | ((mantissa & 0x3FFu) << 13));
  }
  return std::bit_cast<float>(sign | ((exponent - 15 + 127) << 23) | (mantissa << 13));
}

}  // namespace fcnpose
