#include <gtest/gtest.h>

#include <random>

#include "fcnpose/dataset.hpp"
#include "fcnpose/errors.hpp"
#include "fcnpose/postprocess.hpp"
#include "json.hpp"
#include "partition.hpp"

using namespace fcnpose;

TEST(Binarize, Examples) {
  std::vector<float> map(12, 0.01f);
  EXPECT_TRUE(binarize(map, 3, 4, 0.5f).empty());
  map[6] = 0.9f;
  EXPECT_EQ(binarize(map, 3, 4, 0.5f), (PointSet{{2, 1}}));
  map[1] = 0.5f;  // exactly at the threshold: included
  EXPECT_EQ(binarize(map, 3, 4, 0.5f), (PointSet{{1, 0}, {2, 1}}));
  EXPECT_THROW(binarize(map, 3, 4, 1.0f), ContractViolation);
  EXPECT_THROW(binarize(map, 3, 4, 0.0f), ContractViolation);
  EXPECT_THROW(binarize(map, 4, 4, 0.5f), ContractViolation);
}

TEST(ExpansionCluster, Examples) {
  const auto one = expansion_cluster({{0, 0}, {0, 1}, {1, 1}}, 1.0);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_NEAR(one[0].centroid.x, 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(one[0].centroid.y, 2.0 / 3.0, 1e-12);

  EXPECT_TRUE(expansion_cluster({}, 1.0).empty());

  const auto two = expansion_cluster({{0, 0}, {10, 10}}, 1.0);
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[0].centroid, (Point2{0, 0}));
  EXPECT_EQ(two[1].centroid, (Point2{10, 10}));

  EXPECT_THROW(expansion_cluster({{0, 0}}, 0.0), ContractViolation);
}

TEST(ExpansionCluster, DiagonalNeighborsSplitAtMOne) {
  EXPECT_EQ(expansion_cluster({{0, 0}, {1, 1}}, 1.0).size(), 2u);
  EXPECT_EQ(expansion_cluster({{0, 0}, {1, 1}}, 1.5).size(), 1u);
}

TEST(ExpansionCluster, MatchesBruteForceAndLiteralAlgorithm) {
  std::mt19937 gen(31);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = gen() % 200;
    const double m = std::vector<double>{1.0, 2.0, 5.0, 1.5, 3.3}[trial % 5];
    const PointSet pts = oracle::random_points(gen, n, 40, 30);
    const auto got = oracle::to_partition(expansion_cluster(pts, m));
    EXPECT_EQ(got, oracle::brute_force_components(oracle::to_oracle(pts), m)) << trial;
    if (n <= 120) {
      EXPECT_EQ(got, oracle::literal_expansion_clustering(oracle::to_oracle(pts), m)) << trial;
    }
  }
}

TEST(ExpansionCluster, FourConnectedComponentsAtMOne) {
  std::mt19937 gen(32);
  for (int trial = 0; trial < 30; ++trial) {
    const int h = 20, w = 25;
    std::vector<std::uint8_t> grid(h * w);
    PointSet pts;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (gen() % 100 < 45) {
          grid[y * w + x] = 1;
          pts.push_back({x, y});
        }
    EXPECT_EQ(oracle::to_partition(expansion_cluster(pts, 1.0)), oracle::flood_fill_components(grid, h, w));
  }
}

TEST(ExpansionCluster, PermutationInvarianceAndContainment) {
  std::mt19937 gen(33);
  PointSet pts = oracle::random_points(gen, 150, 30, 30);
  const auto base = expansion_cluster(pts, 2.0);
  std::shuffle(pts.begin(), pts.end(), gen);
  const auto shuffled = expansion_cluster(pts, 2.0);
  EXPECT_EQ(oracle::to_partition(base), oracle::to_partition(shuffled));
  auto centroids = [](const std::vector<Cluster>& cs) {
    std::set<std::pair<double, double>> out;
    for (const Cluster& c : cs) out.insert({std::round(c.centroid.x * 1e9), std::round(c.centroid.y * 1e9)});
    return out;
  };
  EXPECT_EQ(centroids(base), centroids(shuffled));
  for (const Cluster& c : base) {
    double sx = 0, sy = 0;
    int x0 = 1 << 30, x1 = -1, y0 = 1 << 30, y1 = -1;
    for (const Pixel& p : c.members) {
      sx += p.x;
      sy += p.y;
      x0 = std::min(x0, p.x), x1 = std::max(x1, p.x), y0 = std::min(y0, p.y), y1 = std::max(y1, p.y);
    }
    EXPECT_NEAR(c.centroid.x, sx / c.members.size(), 1e-12);
    EXPECT_NEAR(c.centroid.y, sy / c.members.size(), 1e-12);
    EXPECT_TRUE(c.centroid.x >= x0 && c.centroid.x <= x1 && c.centroid.y >= y0 && c.centroid.y <= y1);
  }
}

TEST(SelectKeypoint, LargestClusterWithDeterministicTies) {
  EXPECT_FALSE(select_keypoint({}).has_value());
  const Cluster five{{{0, 0}, {1, 0}, {2, 0}, {3, 0}, {4, 0}}, {2, 0}};
  const Cluster two{{{9, 9}, {9, 8}}, {9, 8.5}};
  EXPECT_EQ(select_keypoint({two, five}), (Point2{2, 0}));
  const Cluster a{{{5, 3}, {6, 3}}, {5.5, 3}};
  const Cluster b{{{1, 7}, {2, 7}}, {1.5, 7}};
  const Cluster c{{{7, 3}, {9, 3}}, {8.0, 3}};
  EXPECT_EQ(select_keypoint({b, a}), (Point2{5.5, 3}));  // smaller y wins
  EXPECT_EQ(select_keypoint({c, a}), (Point2{5.5, 3}));  // same y, smaller x wins
}

TEST(ExtractKeypoints, IdealDisksRecoverCenters) {
  KeypointSet truth;
  for (std::size_t k = 0; k < kKeypointCount; ++k) truth[k] = {10.0 + 12.0 * (k % 4), 12.0 + 30.0 * (k / 4), true};
  Tensor out = rasterize_masks(truth, 64, 64, 6.0, 4.0);
  for (float& v : out.values()) v = v > 0 ? 0.97f : 0.02f;
  const auto pred = extract_keypoints(out);
  for (std::size_t k = 0; k < kKeypointCount; ++k) {
    ASSERT_TRUE(pred.keypoints[k].has_value());
    EXPECT_LE(std::hypot(pred.keypoints[k]->x - truth[k].x, pred.keypoints[k]->y - truth[k].y), 1.0);
  }
  EXPECT_EQ(pred.skeleton.shape(), (std::vector<std::size_t>{1, 64, 64}));
  for (std::size_t i = 0; i < pred.skeleton.size(); ++i) {
    EXPECT_EQ(pred.skeleton.data()[i], out.channel(8)[i] >= 0.5f ? 1.0f : 0.0f);
  }
}

TEST(ExtractKeypoints, AllZeroAndNoise) {
  const auto none = extract_keypoints(Tensor::chw(9, 32, 32));
  for (const Detection& d : none.keypoints) EXPECT_FALSE(d.has_value());

  KeypointSet truth;
  for (Keypoint& p : truth) p = {20, 20, true};
  Tensor out = rasterize_masks(truth, 64, 64, 6.0, 4.0);
  out.at(3, 60, 2) = 1.0f;  // isolated noise pixel
  const auto pred = extract_keypoints(out);
  ASSERT_TRUE(pred.keypoints[3].has_value());
  EXPECT_NEAR(pred.keypoints[3]->x, 20.0, 1e-9);
  EXPECT_NEAR(pred.keypoints[3]->y, 20.0, 1e-9);
  EXPECT_THROW(extract_keypoints(Tensor::chw(8, 32, 32)), ContractViolation);
}

TEST(PredictionsJson, Schema) {
  ImagePrediction p;
  p.image = "val_00000.ppm";
  p.keypoints[0] = Point2{1.5, 2.5};
  const auto doc = nlohmann::json::parse(predictions_json({p}));
  ASSERT_EQ(doc.size(), 1u);
  EXPECT_EQ(doc[0]["image"], "val_00000.ppm");
  ASSERT_EQ(doc[0]["keypoints"].size(), kKeypointCount);
  EXPECT_EQ(doc[0]["keypoints"][0]["x"], 1.5);
  EXPECT_EQ(doc[0]["keypoints"][0]["detected"], true);
  EXPECT_EQ(doc[0]["keypoints"][1]["detected"], false);
}
