#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "evstr/str/registration.hpp"
#include "evstr/synth/generator.hpp"
#include "test_util.hpp"

namespace evstr {
namespace {

using synth::NoiseModel;
using synth::SceneModel;

void expect_monotone(const StrResult& r) {
  ASSERT_FALSE(r.objective_history.empty());
  for (std::size_t i = 1; i < r.objective_history.size(); ++i) {
    EXPECT_LE(r.objective_history[i],
              r.objective_history[i - 1] * (1.0 + 1e-12) + 1e-300)
        << "iteration " << i;
  }
}

synth::SyntheticBatch unit_rate_batch(std::uint64_t seed, double outliers,
                                      std::size_t n = 10000) {
  const CameraIntrinsics intr = testing::davis_intrinsics();
  const SceneModel scene = SceneModel::covering(2000, intr, 0.1, seed);
  std::mt19937_64 rng(seed ^ 0x5eed);
  const AngularVelocity w(testing::random_unit(rng));
  NoiseModel noise;
  noise.outlier_fraction = outliers;
  return synth::generate_batch(scene, w, 1.0, 1.05, n, intr, noise, seed);
}

TEST(Split, InclusiveMidpoint) {
  const std::vector<double> ts{0.0, 0.25, 0.5, 0.75, 1.0};
  const SplitIndices s = split_times(ts, 0.0, 1.0);
  EXPECT_EQ(s.m, 3u);
  EXPECT_EQ(s.n, 5u);
}

TEST(Split, EmptyHalfIsInsufficientData) {
  const std::vector<double> ts{0.0, 0.1, 0.2};
  try {
    split_times(ts, 0.0, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::kInsufficientData);
  }
}

TEST(Split, MatchesDirectCount) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(2.0, 3.0);
  std::vector<double> ts(10000);
  for (double& t : ts) t = u(rng);
  std::sort(ts.begin(), ts.end());
  const auto want = static_cast<std::size_t>(
      std::count_if(ts.begin(), ts.end(), [](double t) { return t <= 2.5; }));
  EXPECT_EQ(split_times(ts, 2.0, 3.0).m, want);
}

TEST(EventResidual, NoiselessPairIsZero) {
  std::mt19937_64 rng(2);
  const Rotation r = exp_so3(testing::random_rotvec(rng, 0.0, 0.3));
  const Eigen::Vector3d a = testing::random_ray_in_cone(rng, 0.5);
  const std::vector<Eigen::Vector3d> beta{testing::random_unit(rng), r * a,
                                          testing::random_unit(rng)};
  const RayIndex idx(beta, 10);
  const auto hit = event_residual(r, a, idx, IndexRange{10, 12});
  ASSERT_TRUE(hit);
  EXPECT_EQ(hit->index, 11u);
  EXPECT_LE(hit->distance, 1e-12);
}

TEST(EventResidual, ChordOfRotatedRay) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector3d a = testing::random_unit(rng);
    const Eigen::Vector3d axis = a.unitOrthogonal();
    const double theta = std::uniform_real_distribution<double>(0.0, 3.0)(rng);
    const std::vector<Eigen::Vector3d> beta{exp_so3(theta * axis) * a};
    const RayIndex idx(beta, 0);
    const auto hit = event_residual(Rotation::identity(), a, idx, IndexRange{0, 0});
    EXPECT_NEAR(hit->distance, 2.0 * std::sin(theta / 2.0), 1e-9);
  }
}

TEST(EventResidual, EmptyNeighbourhoodIsUnmatched) {
  const std::vector<Eigen::Vector3d> beta{Eigen::Vector3d::UnitZ()};
  const RayIndex idx(beta, 0);
  EXPECT_FALSE(event_residual(Rotation::identity(), Eigen::Vector3d::UnitZ(),
                              idx, std::nullopt));
}

TEST(TrimmedSelection, SmallExamples) {
  const std::vector<double> r{3.0, 1.0, 2.0};
  EXPECT_EQ(trimmed_selection(r, 2).indices, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(trimmed_selection(r, 3).indices,
            (std::vector<std::size_t>{1, 2, 0}));
  EXPECT_FALSE(trimmed_selection(r, 3).degraded);
}

TEST(TrimmedSelection, TiesByIndexAndUnmatchedSkipped) {
  const std::vector<double> r{0.5, kUnmatched, 0.5, 0.1, 0.5};
  const TrimmedSelection s = trimmed_selection(r, 3);
  EXPECT_EQ(s.indices, (std::vector<std::size_t>{3, 0, 2}));
  const TrimmedSelection all = trimmed_selection(r, 5);
  EXPECT_TRUE(all.degraded);
  EXPECT_EQ(all.indices.size(), 4u);
}

TEST(TrimmedSelection, MatchesFullSortOracle) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> r(1 + trial * 7);
    for (double& v : r) v = std::round(u(rng) * 50.0) / 50.0;  // many ties
    if (trial % 3 == 0) r[trial % r.size()] = kUnmatched;
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (std::isfinite(r[i])) order.push_back(i);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return r[a] < r[b]; });
    const std::size_t k = std::min(order.size(), r.size() * 4 / 5);
    order.resize(k);
    EXPECT_EQ(trimmed_selection(r, k).indices, order);
    std::vector<std::size_t> unsorted = trimmed_selection(r, k, false).indices;
    std::sort(unsorted.begin(), unsorted.end());
    std::sort(order.begin(), order.end());
    EXPECT_EQ(unsorted, order);
  }
}

TEST(Wahba, IdenticalPairsGiveIdentity) {
  std::mt19937_64 rng(5);
  std::vector<Eigen::Vector3d> a;
  for (int i = 0; i < 10; ++i) a.push_back(testing::random_unit(rng));
  EXPECT_LE(wahba_update(a, a).angle(), 1e-12);
}

TEST(Wahba, RecoversKnownRotationFromNoiselessPairs) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const Rotation truth = testing::random_rotation(rng);
    std::vector<Eigen::Vector3d> a, b;
    for (int i = 0; i < 100; ++i) {
      a.push_back(testing::random_unit(rng));
      b.push_back(truth * a.back());
    }
    EXPECT_LE(geodesic_distance(wahba_update(a, b), truth), 1e-9);
  }
}

TEST(Wahba, ReflectionGuard) {
  std::mt19937_64 rng(7);
  const Eigen::Matrix3d mirror = Eigen::Vector3d(1, 1, -1).asDiagonal();
  std::vector<Eigen::Vector3d> a, b;
  for (int i = 0; i < 50; ++i) {
    a.push_back(testing::random_unit(rng));
    b.push_back(mirror * a.back());
  }
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (int i = 0; i < 50; ++i) cov += b[i] * a[i].transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  ASSERT_LT((svd.matrixU() * svd.matrixV().transpose()).determinant(), 0.0);
  EXPECT_NEAR(wahba_update(a, b).matrix().determinant(), 1.0, 1e-12);
}

TEST(Wahba, CollinearRaysAreDegenerate) {
  const std::vector<Eigen::Vector3d> a(5, Eigen::Vector3d::UnitX());
  try {
    wahba_update(a, a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::kDegenerateGeometry);
  }
  EXPECT_THROW(wahba_update(std::vector<Eigen::Vector3d>(3), a), Error);
}

TEST(RecoverVelocity, Examples) {
  const VelocityEstimate zero = recover_velocity(Rotation::identity(), 0.0, 1.0);
  EXPECT_EQ(zero.omega.value, Eigen::Vector3d::Zero());
  EXPECT_TRUE(zero.r_alpha_beta.matrix().isIdentity(0.0));

  const VelocityEstimate v = recover_velocity(exp_so3({0, 0, 0.1}), 2.0, 2.1);
  EXPECT_NEAR(v.omega.value.z(), 2.0, 1e-12);
  EXPECT_NEAR(v.omega.value.head<2>().norm(), 0.0, 1e-15);
  EXPECT_THROW(recover_velocity(Rotation::identity(), 1.0, 1.0), Error);
}

TEST(RecoverVelocity, RoundTripThroughMotionModel) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 500; ++i) {
    const Rotation rd = exp_so3(testing::random_rotvec(rng, 0.0, 1.5));
    const double a = 3.0, b = 3.0 + 0.01 + 0.2 * std::uniform_real_distribution<double>()(rng);
    const VelocityEstimate v = recover_velocity(rd, a, b);
    EXPECT_LE(geodesic_distance(relative_rotation(v.omega, (b - a) / 2.0), rd), 1e-9);
    EXPECT_LE(geodesic_distance(v.r_alpha_beta, exp_so3(2.0 * v.rotvec)), 1e-12);
  }
}

TEST(StrSolve, ZeroMotionBatch) {
  const CameraIntrinsics intr = testing::davis_intrinsics();
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> x(0.0, 239.0), y(0.0, 179.0), t(0.0, 0.5);
  std::vector<Event> first;
  for (int i = 0; i < 500; ++i) first.push_back({{x(rng), y(rng)}, t(rng), 1});
  std::sort(first.begin(), first.end(),
            [](const Event& a, const Event& b) { return a.t < b.t; });
  std::vector<Event> events = first;
  for (Event e : first) {
    e.t += 0.5;
    events.push_back(e);
  }
  const StrResult r = str_solve(EventBatch(events, 0.0, 1.0), intr);
  EXPECT_LE(r.r_delta.angle(), 1e-9);
  EXPECT_LE(r.omega.rate(), 1e-9);
  EXPECT_TRUE(r.converged);
  expect_monotone(r);
}

TEST(StrSolve, NoiselessSyntheticRecovery) {
  const CameraIntrinsics intr = testing::davis_intrinsics();
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    const synth::SyntheticBatch sb = unit_rate_batch(seed, 0.0);
    const StrResult r = str_solve(sb.batch, intr);
    EXPECT_LE((r.omega.value - sb.omega.value).norm(), 1e-3);
    EXPECT_LE(geodesic_distance(r.r_delta, sb.r_delta), 1e-9);
    EXPECT_EQ(r.correspondences.size(), r.matched * 8 / 10);
    for (const Correspondence& c : r.correspondences) {
      EXPECT_LE(c.residual, 1e-9);
    }
    expect_monotone(r);
  }
}

TEST(StrSolve, CorrespondencesAreTemporallyConsistent) {
  const CameraIntrinsics intr = testing::davis_intrinsics();
  const synth::SyntheticBatch sb = unit_rate_batch(14, 0.2);
  const StrResult r = str_solve(sb.batch, intr);
  const double delta = sb.batch.half_window();
  const double eps = 0.02 * (sb.batch.beta() - sb.batch.alpha());
  const auto& ev = sb.batch.events();
  for (const Correspondence& c : r.correspondences) {
    ASSERT_LT(c.j, r.split_index);
    ASSERT_GE(c.n_j, r.split_index);
    EXPECT_LE(std::abs(ev[c.n_j].t - ev[c.j].t - delta), eps);
  }
  for (std::size_t i = 1; i < r.correspondences.size(); ++i) {
    EXPECT_LE(r.correspondences[i - 1].residual, r.correspondences[i].residual);
  }
  EXPECT_TRUE(r.r_alpha_beta.matrix() == (r.r_delta * r.r_delta).matrix());
  expect_monotone(r);
}

TEST(StrSolve, TrimmingBeatsUntrimmedUnderOutliers) {
  const CameraIntrinsics intr = testing::davis_intrinsics();
  StrConfig untrimmed;
  untrimmed.trim_fraction = 1.0;
  for (std::uint64_t seed : {21u, 22u, 23u}) {
    const synth::SyntheticBatch sb = unit_rate_batch(seed, 0.2);
    const StrResult a = str_solve(sb.batch, intr);
    const StrResult b = str_solve(sb.batch, intr, untrimmed);
    const double ea = (a.omega.value - sb.omega.value).norm();
    const double eb = (b.omega.value - sb.omega.value).norm();
    EXPECT_LT(ea, eb);
    expect_monotone(a);
    expect_monotone(b);
  }
}

TEST(StrSolve, PolarityMatchingRestrictsCandidates) {
  const CameraIntrinsics intr = testing::davis_intrinsics();
  const synth::SyntheticBatch sb = unit_rate_batch(15, 0.0, 4000);
  StrConfig cfg;
  cfg.match_polarity = true;
  const StrResult r = str_solve(sb.batch, intr, cfg);
  for (const Correspondence& c : r.correspondences) {
    EXPECT_EQ(sb.batch.events()[c.j].p, sb.batch.events()[c.n_j].p);
  }
  expect_monotone(r);
}

TEST(StrSolve, ConfigValidationAndErrors) {
  StrConfig cfg;
  cfg.trim_fraction = 0.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.eps_t = -1.0;
  EXPECT_THROW(cfg.validate(), Error);

  std::vector<Event> one_half{{{10, 10}, 0.1, 1}, {{20, 20}, 0.2, 1}};
  EXPECT_THROW(str_solve(EventBatch(one_half, 0.0, 1.0), testing::davis_intrinsics()),
               Error);
}

TEST(StrSolve, ExplicitTrimCountFlagsDegraded) {
  const CameraIntrinsics intr = testing::davis_intrinsics();
  const synth::SyntheticBatch sb = unit_rate_batch(16, 0.0, 2000);
  StrConfig cfg;
  cfg.trim_count = 5000;
  const StrResult r = str_solve(sb.batch, intr, cfg);
  EXPECT_TRUE(r.degraded);
  EXPECT_EQ(r.correspondences.size(), r.matched);
}

// A start near the truth is taken and shortens the solve; a poor one is
// ignored and the result equals the identity start exactly.
TEST(StrSolve, InitialRotationIsUsedOnlyWhenBetter) {
  const CameraIntrinsics intr = testing::davis_intrinsics();
  const synth::SyntheticBatch sb = unit_rate_batch(17, 0.1);
  const StrResult cold = str_solve(sb.batch, intr);

  StrConfig near;
  near.initial = exp_so3(0.002 * Eigen::Vector3d::UnitX()) * sb.r_delta;
  const StrResult warm = str_solve(sb.batch, intr, near);
  EXPECT_LT(warm.iterations, cold.iterations);
  EXPECT_LE((warm.omega.value - sb.omega.value).norm(), 2e-2);
  expect_monotone(warm);

  StrConfig far;
  far.initial = exp_so3(Eigen::Vector3d(0.0, 0.4, 0.0));
  const StrResult ignored = str_solve(sb.batch, intr, far);
  EXPECT_EQ(ignored.iterations, cold.iterations);
  EXPECT_TRUE(ignored.r_delta.matrix() == cold.r_delta.matrix());
}

}  // namespace
}  // namespace evstr
