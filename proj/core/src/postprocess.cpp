#include "fcnpose/postprocess.hpp"

#include <algorithm>
#include <tuple>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include "json.hpp"

#include "fcnpose/errors.hpp"

namespace fcnpose {
namespace {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n), rank_(n, 0) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }

  std::size_t find(std::size_t i) {
    while (parent_[i] != i) {
      parent_[i] = parent_[parent_[i]];
      i = parent_[i];
    }
    return i;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::uint8_t> rank_;
};

struct CellKey {
  std::int64_t cx, cy;
  bool operator==(const CellKey&) const = default;
};

struct CellHash {
  std::size_t operator()(const CellKey& k) const noexcept {
    return std::hash<std::int64_t>()(k.cx * 0x9E3779B97F4A7C15LL ^ k.cy);
  }
};

}  // namespace

PointSet binarize(std::span<const float> map, std::size_t height, std::size_t width, float threshold) {
  if (!(threshold > 0.0f && threshold < 1.0f)) throw ContractViolation("binarize: threshold must lie in (0, 1)");
  if (map.size() != height * width) throw ContractViolation("binarize: map size does not match height x width");
  PointSet points;
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      if (map[y * width + x] >= threshold) points.push_back({static_cast<int>(x), static_cast<int>(y)});
    }
  }
  return points;
}

PointSet binarize(const Tensor& output, std::size_t channel, float threshold) {
  if (output.rank() != 3 || channel >= output.channels()) throw ContractViolation("binarize: bad channel");
  return binarize(output.channel(channel), output.height(), output.width(), threshold);
}

std::vector<Cluster> expansion_cluster(const PointSet& points, double max_distance) {
  if (!(max_distance > 0.0)) throw ContractViolation("expansion_cluster: M must be positive");
  const std::size_t n = points.size();
  if (n == 0) return {};

  // Bucket points into square cells of side M; any pair within distance M is
  // in the same or an adjacent cell.
  auto cell_of = [max_distance](const Pixel& p) {
    return CellKey{static_cast<std::int64_t>(std::floor(p.x / max_distance)),
                   static_cast<std::int64_t>(std::floor(p.y / max_distance))};
  };
  std::unordered_map<CellKey, std::vector<std::size_t>, CellHash> cells;
  cells.reserve(n);
  for (std::size_t i = 0; i < n; ++i) cells[cell_of(points[i])].push_back(i);

  const double limit_sq = max_distance * max_distance;
  DisjointSets sets(n);
  for (std::size_t i = 0; i < n; ++i) {
    const CellKey home = cell_of(points[i]);
    for (std::int64_t dy = -1; dy <= 1; ++dy) {
      for (std::int64_t dx = -1; dx <= 1; ++dx) {
        const auto it = cells.find({home.cx + dx, home.cy + dy});
        if (it == cells.end()) continue;
        for (std::size_t j : it->second) {
          if (j <= i) continue;
          const double ddx = points[i].x - points[j].x;
          const double ddy = points[i].y - points[j].y;
          if (ddx * ddx + ddy * ddy <= limit_sq) sets.unite(i, j);
        }
      }
    }
  }

  std::vector<Cluster> clusters;
  std::unordered_map<std::size_t, std::size_t> root_to_cluster;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t root = sets.find(i);
    auto [it, inserted] = root_to_cluster.try_emplace(root, clusters.size());
    if (inserted) clusters.emplace_back();
    clusters[it->second].members.push_back(points[i]);
  }
  for (Cluster& c : clusters) {
    double sx = 0.0, sy = 0.0;
    for (const Pixel& p : c.members) {
      sx += p.x;
      sy += p.y;
    }
    const auto count = static_cast<double>(c.members.size());
    c.centroid = {sx / count, sy / count};
  }
  return clusters;
}

Detection select_keypoint(const std::vector<Cluster>& clusters) {
  const Cluster* best = nullptr;
  for (const Cluster& c : clusters) {
    if (best == nullptr || c.members.size() > best->members.size() ||
        (c.members.size() == best->members.size() &&
         std::tie(c.centroid.y, c.centroid.x) < std::tie(best->centroid.y, best->centroid.x))) {
      best = &c;
    }
  }
  if (best == nullptr) return std::nullopt;
  return best->centroid;
}

KeypointPrediction extract_keypoints(const Tensor& output, float threshold, double max_distance) {
  if (output.rank() != 3 || output.channels() != kOutputChannels) {
    throw ContractViolation("extract_keypoints: expected a (9,H,W) output");
  }
  KeypointPrediction prediction;
  for (std::size_t c = 0; c < kKeypointCount; ++c) {
    prediction.keypoints[c] = select_keypoint(expansion_cluster(binarize(output, c, threshold), max_distance));
  }
  prediction.skeleton = Tensor::chw(1, output.height(), output.width());
  const auto skeleton = output.channel(kKeypointCount);
  if (!(threshold > 0.0f && threshold < 1.0f)) throw ContractViolation("extract_keypoints: bad threshold");
  for (std::size_t i = 0; i < skeleton.size(); ++i) {
    prediction.skeleton.data()[i] = skeleton[i] >= threshold ? 1.0f : 0.0f;
  }
  return prediction;
}

std::string predictions_json(const std::vector<ImagePrediction>& predictions) {
  using json = nlohmann::json;
  json doc = json::array();
  for (const ImagePrediction& p : predictions) {
    json keypoints = json::array();
    for (const Detection& d : p.keypoints) {
      if (d) {
        keypoints.push_back({{"x", d->x}, {"y", d->y}, {"detected", true}});
      } else {
        keypoints.push_back({{"x", nullptr}, {"y", nullptr}, {"detected", false}});
      }
    }
    doc.push_back({{"image", p.image}, {"keypoints", std::move(keypoints)}});
  }
  return doc.dump(1);
}

void write_predictions_json(const std::vector<ImagePrediction>& predictions, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << predictions_json(predictions) << "\n";
}

}  // namespace fcnpose
