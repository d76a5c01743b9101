#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fcnpose/network.hpp"
#include "fcnpose/tensor.hpp"

namespace fcnpose {

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  bool visible = true;

  bool operator==(const Keypoint&) const = default;
};

/// Base, then one point per joint along the chain, ending at the tool tip.
using KeypointSet = std::array<Keypoint, kKeypointCount>;

inline constexpr std::size_t kLinkCount = kKeypointCount - 1;
inline constexpr std::size_t kSkeletonChannel = kKeypointCount;

/// Annotation geometry: keypoint disks and the skeleton stroke.
struct MaskStyle {
  double radius_px = 6.0;
  double stroke_px = 30.0;

  /// Annotation sizes at capture resolution (radius 6, stroke 30 on a 1080-line
  /// frame) scaled by min(h, w) / 1080 and floored at 2 px.
  static MaskStyle scaled_for(std::size_t height, std::size_t width);

  bool operator==(const MaskStyle&) const = default;
};

struct Sample {
  Tensor image;  // (3, H, W), values in [0, 1] on the 8-bit grid
  KeypointSet keypoints;
  Tensor masks;  // (9, H, W), values in {0, 1}

  bool operator==(const Sample&) const = default;
};

struct JointRange {
  double lo = 0.0;
  double hi = 0.0;
};

/// Synthetic articulated-arm scene description.
struct ArmConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  std::array<double, kLinkCount> link_lengths{};  // px
  std::array<JointRange, kLinkCount> joint_ranges{};  // rad, relative to the previous link
  double base_x_lo = 0, base_x_hi = 0;  // px
  double base_y_lo = 0, base_y_hi = 0;  // px
  double base_heading = -1.5707963267948966;  // rad; points up (image y grows downwards)
  double heading_jitter = 0.0;  // rad
  double link_width_px = 3.0;
  double joint_radius_px = 2.0;
  std::size_t clutter_count = 4;
  bool occluders = false;
  std::size_t occluder_count = 1;
  double margin_px = 1.0;
  std::size_t max_attempts = 1000;
  MaskStyle mask;

  /// Defaults proportioned to the frame; h and w must be multiples of 32.
  static ArmConfig for_resolution(std::size_t height, std::size_t width);

  void validate() const;
};

/// Absolute keypoint positions of a chain whose first link leaves `base` at
/// `heading` and each later link turns by the matching relative angle.
KeypointSet forward_kinematics(const ArmConfig& config, double base_x, double base_y, double heading,
                               const std::array<double, kLinkCount>& joint_angles);

/// Channel c < 8: pixels whose center lies within radius of visible keypoint c.
/// Channel 8: pixels within stroke/2 of any segment between consecutive keypoints.
Tensor rasterize_masks(const KeypointSet& keypoints, std::size_t height, std::size_t width, double radius_px,
                       double stroke_px);
inline Tensor rasterize_masks(const KeypointSet& keypoints, std::size_t height, std::size_t width,
                              const MaskStyle& style) {
  return rasterize_masks(keypoints, height, width, style.radius_px, style.stroke_px);
}

Sample gen_scene(const ArmConfig& config, std::uint64_t seed);

struct AugmentParams {
  double max_rotation_deg = 30.0;
  double max_shift_px = 8.0;
  MaskStyle mask;
};

/// Rotation by `rotation_deg` about the image center ((w-1)/2, (h-1)/2),
/// followed by a translation. In image coordinates (y down), +90 degrees maps
/// (cx + d, cy) to (cx, cy + d).
struct SpatialTransform {
  double rotation_deg = 0.0;
  double shift_x = 0.0;
  double shift_y = 0.0;

  Keypoint apply(const Keypoint& p, std::size_t height, std::size_t width) const;
};

enum class AugmentMode { rotation, padding, rotation_and_padding };

/// Warps the image (bilinear, zero fill), moves the keypoints and re-rasterizes
/// the masks. Empty when any keypoint leaves the frame.
std::optional<Sample> transform_sample(const Sample& sample, const SpatialTransform& transform,
                                       const MaskStyle& style);

/// Picks one of rotation / padding / both uniformly, then draws the amounts.
SpatialTransform draw_transform(std::uint64_t seed, const AugmentParams& params, AugmentMode* mode = nullptr);

std::optional<Sample> augment(const Sample& sample, std::uint64_t seed, const AugmentParams& params);

struct DatasetSplit {
  std::vector<Sample> train;
  std::vector<Sample> val;
};

struct DatasetOptions {
  std::size_t n_base = 508;
  double val_fraction = 0.2;
  std::size_t augment_per_image = 2;
  AugmentParams augment;
  std::size_t max_augment_attempts = 200;
  std::size_t threads = 1;
};

/// Splits the base scenes before augmenting; only the training split is
/// augmented, and rejected augmentations are redrawn. The result depends only
/// on (config, options minus threads, seed).
DatasetSplit build_dataset(const ArmConfig& config, const DatasetOptions& options, std::uint64_t seed);

/// Rounds image values onto the 8-bit grid used by the on-disk format.
void quantize_to_8bit(Tensor& image);

// Dataset directory: <split>_NNNNN.ppm images plus <split>.json annotations.
// Masks are not stored; they are re-rasterized from keypoints on load.
void save_split(const std::filesystem::path& dir, const std::string& split, const std::vector<Sample>& samples,
                const MaskStyle& style);
std::vector<Sample> load_split(const std::filesystem::path& dir, const std::string& split);
MaskStyle load_mask_style(const std::filesystem::path& dir, const std::string& split);

void write_ppm(const std::filesystem::path& path, const Tensor& image);
Tensor read_ppm(const std::filesystem::path& path);

}  // namespace fcnpose
