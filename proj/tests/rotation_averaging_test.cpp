#include <algorithm>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "evstr/vo/rotation_averaging.hpp"
#include "test_util.hpp"

namespace evstr {
namespace {

std::vector<Rotation> random_walk(std::size_t n, std::mt19937_64& rng) {
  std::vector<Rotation> truth{testing::random_rotation(rng)};
  for (std::size_t i = 1; i < n; ++i) {
    truth.push_back(exp_so3(testing::random_rotvec(rng, 0.02, 0.1)) * truth.back());
  }
  return truth;
}

// Edges between all nodes at most `reach` apart.
std::vector<RelativeEdge> banded_edges(const std::vector<Rotation>& truth, std::size_t reach,
                                       double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, sigma);
  std::vector<RelativeEdge> edges;
  for (std::size_t u = 0; u < truth.size(); ++u) {
    for (std::size_t v = u + 1; v < truth.size() && v <= u + reach; ++v) {
      const Eigen::Vector3d e(noise(rng), noise(rng), noise(rng));
      edges.push_back({u, v, exp_so3(e) * truth[v] * truth[u].inverse()});
    }
  }
  return edges;
}

double median_error(const std::vector<Rotation>& est, const std::vector<Rotation>& truth) {
  std::vector<double> err;
  for (std::size_t i = 0; i < est.size(); ++i) err.push_back(geodesic_distance(est[i], truth[i]));
  std::nth_element(err.begin(), err.begin() + err.size() / 2, err.end());
  return err[err.size() / 2];
}

TEST(RotationAveraging, SingleNodeIsTheAnchor) {
  const Rotation anchor = exp_so3(Eigen::Vector3d(0.1, 0.2, 0.3));
  const AveragingResult r = rotation_averaging(1, {}, anchor);
  ASSERT_EQ(r.orientations.size(), 1u);
  EXPECT_EQ(r.orientations[0].matrix(), anchor.matrix());
  EXPECT_EQ(r.components, 1u);
}

TEST(RotationAveraging, NoiselessEdgesRecoverAbsolutes) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const auto truth = random_walk(15, rng);
    const auto edges = banded_edges(truth, 4, 0.0, rng);
    const AveragingResult r = rotation_averaging(truth.size(), edges, truth[0]);
    EXPECT_TRUE(r.converged);
    EXPECT_FALSE(r.disconnected);
    for (std::size_t i = 0; i < truth.size(); ++i) {
      EXPECT_LE(geodesic_distance(r.orientations[i], truth[i]), 1e-9);
    }
  }
}

TEST(RotationAveraging, LargeInitialErrorsConverge) {
  // A single long-range edge set initialised along a perturbed chain.
  std::mt19937_64 rng(2);
  const auto truth = random_walk(10, rng);
  auto edges = banded_edges(truth, 9, 0.0, rng);
  // Corrupt the first spanning-tree edge so the chained start is far off.
  edges[0].r_uv = exp_so3(Eigen::Vector3d(0.0, 0.0, 0.3)) * edges[0].r_uv;
  const AveragingResult r = rotation_averaging(truth.size(), edges, truth[0]);
  EXPECT_TRUE(r.converged);
  // The corrupted edge is outvoted by the other 44.
  for (std::size_t i = 1; i < truth.size(); ++i) {
    EXPECT_LT(geodesic_distance(r.orientations[i], truth[i]), 0.05) << i;
  }
}

struct Trial {
  double averaged = 0.0;
  double chained = 0.0;
};

// 20-node segment, edge noise 0.01 rad per axis, and one edge (anywhere)
// rotated by a further 0.5 rad.
Trial outlier_trial(int seed, std::size_t reach) {
  std::mt19937_64 rng(100 + seed);
  const auto truth = random_walk(20, rng);
  auto edges = banded_edges(truth, reach, 0.01, rng);
  std::uniform_int_distribution<std::size_t> pick(0, edges.size() - 1);
  RelativeEdge& bad = edges[pick(rng)];
  bad.r_uv = exp_so3(0.5 * testing::random_unit(rng)) * bad.r_uv;
  const AveragingResult avg = rotation_averaging(truth.size(), edges, truth[0]);
  return {median_error(avg.orientations, truth),
          median_error(chain_rotations(truth.size(), edges, truth[0]), truth)};
}

// Every pair of nodes has an edge, as when all batches of a segment share
// tracks.
TEST(RotationAveraging, BeatsChainingWithAnOutlierEdge) {
  for (int seed = 0; seed < 25; ++seed) {
    const Trial t = outlier_trial(seed, 19);
    EXPECT_LT(t.averaged, t.chained) << "seed " << seed;
  }
}

// Sparse banded graph: per seed, chaining sometimes gets lucky, but
// averaging wins on aggregate.
TEST(RotationAveraging, BeatsChainingOnAverageInABandedGraph) {
  double averaged = 0.0, chained = 0.0;
  for (int seed = 0; seed < 25; ++seed) {
    const Trial t = outlier_trial(seed, 3);
    averaged += t.averaged;
    chained += t.chained;
  }
  EXPECT_LT(averaged, chained);
}

TEST(RotationAveraging, DisconnectedComponentsUseFallback) {
  std::mt19937_64 rng(3);
  const auto truth = random_walk(6, rng);
  // Components {0, 1, 2} and {3, 4, 5}.
  std::vector<RelativeEdge> edges;
  for (auto [u, v] : {std::pair<std::size_t, std::size_t>{0, 1}, {1, 2}, {3, 4}, {4, 5}, {3, 5}}) {
    edges.push_back({u, v, truth[v] * truth[u].inverse()});
  }
  const AveragingResult r = rotation_averaging(6, edges, truth[0], {}, truth);
  EXPECT_TRUE(r.disconnected);
  EXPECT_EQ(r.components, 2u);
  EXPECT_FALSE(r.warnings.empty());
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_LE(geodesic_distance(r.orientations[i], truth[i]), 1e-9) << i;
  }
}

TEST(RotationAveraging, Validation) {
  std::vector<RelativeEdge> loop{{0, 0, Rotation::identity()}};
  EXPECT_THROW(rotation_averaging(2, loop, Rotation::identity()), Error);
  std::vector<RelativeEdge> out_of_range{{0, 5, Rotation::identity()}};
  EXPECT_THROW(rotation_averaging(2, out_of_range, Rotation::identity()), Error);
  EXPECT_THROW(rotation_averaging(0, {}, Rotation::identity()), Error);
  AveragingConfig bad;
  bad.huber_scale = 0.0;
  EXPECT_THROW(rotation_averaging(1, {}, Rotation::identity(), bad), Error);
}

TEST(ChainRotations, ComposesConsecutiveEdges) {
  std::mt19937_64 rng(4);
  const auto truth = random_walk(8, rng);
  const auto edges = banded_edges(truth, 2, 0.0, rng);
  const auto chained = chain_rotations(truth.size(), edges, truth[0]);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    EXPECT_LE(geodesic_distance(chained[i], truth[i]), 1e-12);
  }
}

}  // namespace
}  // namespace evstr
