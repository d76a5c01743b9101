#pragma once

#include <set>
#include <vector>

#include "fcnpose/postprocess.hpp"
#include "oracles.hpp"

namespace oracle {

inline std::vector<P> to_oracle(const fcnpose::PointSet& points) {
  std::vector<P> out;
  for (const auto& p : points) out.push_back({p.x, p.y});
  return out;
}

inline Partition to_partition(const std::vector<fcnpose::Cluster>& clusters) {
  Partition out;
  for (const auto& c : clusters) {
    std::set<P> g;
    for (const auto& p : c.members) g.insert({p.x, p.y});
    out.insert(g);
  }
  return out;
}

/// n unique random points in a w x h box.
template <typename Gen>
fcnpose::PointSet random_points(Gen& gen, std::size_t n, int w, int h) {
  std::set<fcnpose::Pixel> unique;
  while (unique.size() < n) {
    unique.insert({static_cast<int>(gen() % static_cast<unsigned>(w)), static_cast<int>(gen() % static_cast<unsigned>(h))});
  }
  fcnpose::PointSet out(unique.begin(), unique.end());
  for (std::size_t i = out.size(); i > 1; --i) std::swap(out[i - 1], out[gen() % i]);
  return out;
}

}  // namespace oracle
