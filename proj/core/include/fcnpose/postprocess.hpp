#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fcnpose/network.hpp"
#include "fcnpose/tensor.hpp"

namespace fcnpose {

struct Pixel {
  int x = 0;
  int y = 0;

  auto operator<=>(const Pixel&) const = default;
};

/// Unique pixel coordinates.
using PointSet = std::vector<Pixel>;

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Point2&) const = default;
};

struct Cluster {
  std::vector<Pixel> members;  // in input order
  Point2 centroid;             // mean of the members
};

/// A keypoint location, or nullopt when nothing was detected.
using Detection = std::optional<Point2>;

inline constexpr float kDefaultThreshold = 0.5f;
inline constexpr double kDefaultClusterDistance = 1.0;

/// Pixels of an (H, W) activation map with value >= threshold, in scan order.
PointSet binarize(std::span<const float> map, std::size_t height, std::size_t width, float threshold);
PointSet binarize(const Tensor& output, std::size_t channel, float threshold);

/// Expansion Clustering: partitions the points into maximal groups in which
/// every point is chained to the rest by steps of Euclidean length <= M
/// (single-linkage connected components). Clusters are ordered by their
/// first point in input order.
std::vector<Cluster> expansion_cluster(const PointSet& points, double max_distance);

/// Centroid of the cluster with the most points; ties go to the smaller
/// (centroid y, centroid x).
Detection select_keypoint(const std::vector<Cluster>& clusters);

struct KeypointPrediction {
  std::array<Detection, kKeypointCount> keypoints;
  Tensor skeleton;  // (1, H, W) binary skeleton mask
};

/// Binarize -> cluster -> select on channels 0..7; channel 8 is returned as a mask.
KeypointPrediction extract_keypoints(const Tensor& output, float threshold = kDefaultThreshold,
                                     double max_distance = kDefaultClusterDistance);

struct ImagePrediction {
  std::string image;
  std::array<Detection, kKeypointCount> keypoints;
};

/// JSON array with one object per image: {"image", "keypoints": [{x, y, detected} x 8]}.
std::string predictions_json(const std::vector<ImagePrediction>& predictions);
void write_predictions_json(const std::vector<ImagePrediction>& predictions, const std::filesystem::path& path);

}  // namespace fcnpose
