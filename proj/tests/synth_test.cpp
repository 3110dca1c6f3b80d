#include <cmath>
#include <map>
#include <random>

#include <gtest/gtest.h>

#include "evstr/str/registration.hpp"
#include "evstr/synth/generator.hpp"
#include "test_util.hpp"

namespace evstr {
namespace {

using synth::MotionScript;
using synth::NoiseModel;
using synth::SceneModel;

TEST(GenerateBatch, ZeroVelocityPairsShareAPixel) {
  const CameraIntrinsics intr = testing::davis_intrinsics();
  const SceneModel scene = SceneModel::covering(300, intr, 0.0, 1);
  NoiseModel noise;
  noise.time_jitter = 0.0;
  const auto sb = synth::generate_batch(scene, AngularVelocity(0, 0, 0), 0.0,
                                        0.1, 2000, intr, noise, 2);
  // Exact pairs: every inlier at t has a twin with the same pixel at t + delta.
  const auto& ev = sb.batch.events();
  std::multimap<double, std::size_t> by_time;
  for (std::size_t i = 0; i < ev.size(); ++i) by_time.emplace(ev[i].t, i);
  std::size_t checked = 0;
  for (std::size_t i = 0; i < sb.batch.split_index(); ++i) {
    const auto [lo, hi] = by_time.equal_range(ev[i].t + 0.05);
    for (auto it = lo; it != hi; ++it) {
      if (sb.source[it->second] == sb.source[i]) {
        EXPECT_EQ(ev[it->second].u, ev[i].u);
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 900u);
}

TEST(GenerateBatch, NoiselessResidualsUnderTruthVanish) {
  const CameraIntrinsics intr = testing::davis_intrinsics();
  const SceneModel scene = SceneModel::covering(1000, intr, 0.1, 3);
  const auto sb = synth::generate_batch(scene, AngularVelocity(0.3, -0.5, 0.8),
                                        0.0, 0.05, 4000, intr, {}, 4);
  const auto rays = event_rays(sb.batch.events(), intr);
  const auto ts = sb.batch.timestamps();
  const std::size_t m = sb.batch.split_index();
  const IntervalIndex temporal(std::span<const double>(ts).subspan(m), m, 0.025, 0.001);
  const RayIndex spatial(std::span<const Eigen::Vector3d>(rays).subspan(m), m);
  // Events whose twin was generated into the second half, within the
  // time-stamp jitter of t + delta.
  std::size_t checked = 0;
  for (std::size_t j = 0; j < m; ++j) {
    bool twin = false;
    for (std::size_t k = m; k < ts.size() && !twin; ++k) {
      twin = sb.source[k] == sb.source[j] && sb.source[j] != synth::kOutlier &&
             std::abs(ts[k] - ts[j] - 0.025) <= 2e-4;
    }
    if (!twin) continue;
    const auto hit = event_residual(sb.r_delta, rays[j], spatial,
                                    temporal.query_range(ts[j]));
    ASSERT_TRUE(hit);
    EXPECT_LE(hit->distance, 1e-12);
    ++checked;
  }
  EXPECT_GT(checked, m * 9 / 10);
}

TEST(GenerateBatch, PixelNoiseChordResidual) {
  // Residual between twin events under the true rotation with 0.5 px noise,
  // checked against an independent Monte-Carlo estimate of the same quantity
  // computed from the noise-free pixels.
  const CameraIntrinsics intr = testing::davis_intrinsics();
  const SceneModel scene = SceneModel::covering(2000, intr, 0.1, 5);
  NoiseModel noise;
  noise.pixel_sigma = 0.5;
  noise.time_jitter = 0.0;
  NoiseModel clean;
  clean.time_jitter = 0.0;
  const AngularVelocity w(0.0, 0.0, 0.0);
  const auto noisy = synth::generate_batch(scene, w, 0.0, 0.1, 100000, intr, noise, 6);
  const auto exact = synth::generate_batch(scene, w, 0.0, 0.1, 100000, intr, clean, 6);
  const auto& ev = noisy.batch.events();
  std::multimap<std::pair<double, int>, std::size_t> twin;
  for (std::size_t i = 0; i < ev.size(); ++i) twin.emplace(std::pair(ev[i].t, noisy.source[i]), i);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < noisy.batch.split_index(); ++i) {
    const auto it = twin.find({ev[i].t + 0.05, noisy.source[i]});
    if (it == twin.end()) continue;
    sum += (pixel_ray(ev[it->second].u, intr) - pixel_ray(ev[i].u, intr)).norm();
    ++count;
  }
  ASSERT_GT(count, 40000u);
  const double measured = sum / static_cast<double>(count);

  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 0.5);
  double mc = 0.0;
  const auto& clean_ev = exact.batch.events();
  for (std::size_t i = 0; i < clean_ev.size(); ++i) {
    const Eigen::Vector2d u = clean_ev[i].u;
    const Eigen::Vector2d a = u + Eigen::Vector2d(n(rng), n(rng));
    const Eigen::Vector2d b = u + Eigen::Vector2d(n(rng), n(rng));
    mc += (backproject(a, intr) - backproject(b, intr)).norm();
  }
  mc /= static_cast<double>(clean_ev.size());
  EXPECT_NEAR(measured, mc, 0.03 * mc);
  EXPECT_NEAR(measured, std::sqrt(2.0) * 0.5 / 200.0, 0.2 * std::sqrt(2.0) * 0.5 / 200.0);
}

TEST(GenerateBatch, OutliersAndCounts) {
  const CameraIntrinsics intr = testing::davis_intrinsics();
  const SceneModel scene = SceneModel::covering(500, intr, 0.1, 8);
  NoiseModel noise;
  noise.outlier_fraction = 0.2;
  const auto sb = synth::generate_batch(scene, AngularVelocity(1, 0, 0), 0.0,
                                        0.05, 5001, intr, noise, 9);
  EXPECT_EQ(sb.batch.size(), 5001u);
  EXPECT_EQ(std::count(sb.source.begin(), sb.source.end(), synth::kOutlier), 1000);
  noise.outlier_fraction = 1.0;
  EXPECT_THROW(synth::generate_batch(scene, AngularVelocity(), 0, 1, 10, intr, noise, 1),
               Error);
}

TEST(GenerateBatch, ResolutionDoesNotChangeEventCount) {
  for (int scale : {1, 2, 4, 8}) {
    const CameraIntrinsics intr(200.0 * scale, 200.0 * scale, 120.0 * scale,
                                90.0 * scale, 0, 0, {240 * scale, 180 * scale});
    const SceneModel scene = SceneModel::covering(500, intr, 0.1, 10);
    const auto sb = synth::generate_batch(scene, AngularVelocity(0, 1, 0), 0.0,
                                          0.05, 3000, intr, {}, 11);
    EXPECT_EQ(sb.batch.size(), 3000u);
  }
}

TEST(GenerateBatch, Reproducible) {
  const CameraIntrinsics intr = testing::davis_intrinsics();
  const SceneModel scene = SceneModel::covering(500, intr, 0.1, 12);
  NoiseModel noise;
  noise.pixel_sigma = 1.0;
  noise.outlier_fraction = 0.1;
  const auto a = synth::generate_batch(scene, AngularVelocity(0, 1, 0), 0, 0.05, 3000, intr, noise, 13);
  const auto b = synth::generate_batch(scene, AngularVelocity(0, 1, 0), 0, 0.05, 3000, intr, noise, 13);
  for (std::size_t i = 0; i < a.batch.size(); ++i) {
    ASSERT_EQ(a.batch.events()[i].u, b.batch.events()[i].u);
    ASSERT_EQ(a.batch.events()[i].t, b.batch.events()[i].t);
    ASSERT_EQ(a.batch.events()[i].p, b.batch.events()[i].p);
  }
}

TEST(GenerateBatch, DistortedSensorPairsStayConsistent) {
  const CameraIntrinsics intr(200, 200, 120, 90, -0.1, 0.02, {240, 180});
  const SceneModel scene = SceneModel::covering(1000, intr, 0.1, 14);
  const auto sb = synth::generate_batch(scene, AngularVelocity(0.2, 0.7, 0.1),
                                        0.0, 0.05, 4000, intr, {}, 15);
  const StrResult r = str_solve(sb.batch, intr);
  EXPECT_LE(geodesic_distance(r.r_delta, sb.r_delta), 1e-8);
}

TEST(MotionScript, EndpointMatchesClosedFormComposition) {
  std::mt19937_64 rng(16);
  const Rotation r0 = testing::random_rotation(rng);
  std::vector<synth::MotionSegment> segs;
  Rotation expected = r0;
  double total = 0.0;
  for (int i = 0; i < 5; ++i) {
    const double d = 0.5 + i * 0.3;
    const Eigen::Vector3d w = testing::random_unit(rng) * (0.5 + i * 0.2);
    segs.push_back({d, w});
    expected = exp_so3(d * w) * expected;
    total += d;
  }
  const MotionScript script(segs, r0);
  EXPECT_NEAR(script.duration(), total, 1e-12);
  EXPECT_LE(geodesic_distance(script.orientation_at(total), expected), 1e-12);
  EXPECT_LE(geodesic_distance(script.orientation_at(0.0), r0), 1e-15);
  EXPECT_THROW(MotionScript({{0.0, Eigen::Vector3d::Zero()}}), Error);
}

TEST(GenerateStream, RateDoublingAndGroundTruthGrid) {
  const CameraIntrinsics intr = testing::davis_intrinsics();
  const SceneModel scene = SceneModel::sphere(5000, 17);
  const MotionScript script = MotionScript::constant({0.3, 0.4, 0.5}, 2.0);
  synth::StreamConfig cfg;
  cfg.event_rate = 5000;
  const auto a = synth::generate_stream(scene, script, intr, cfg, 18);
  cfg.event_rate = 10000;
  const auto b = synth::generate_stream(scene, script, intr, cfg, 18);
  EXPECT_LE(std::abs(static_cast<long>(b.events.size()) -
                     2 * static_cast<long>(a.events.size())), 1);
  ASSERT_EQ(a.trajectory.size(), 251u);
  EXPECT_EQ(a.trajectory[1].t, 1.0 / 125.0);
  const double tend = a.trajectory.back().t;
  EXPECT_LE(geodesic_distance(a.trajectory.back().orientation,
                              script.orientation_at(tend).inverse()),
            1e-12);
  for (std::size_t i = 1; i < b.events.size(); ++i) {
    ASSERT_LE(b.events[i - 1].t, b.events[i].t);
  }
}

TEST(GenerateStream, OneSegmentBehavesLikeBatches) {
  // A window cut from a constant-velocity stream registers close to the
  // generating velocity.
  const CameraIntrinsics intr = testing::davis_intrinsics();
  const SceneModel scene = SceneModel::sphere(2000, 19);
  const Eigen::Vector3d w(0.0, 0.6, 0.8);
  const MotionScript script = MotionScript::constant(w, 0.5);
  synth::StreamConfig cfg;
  cfg.event_rate = 200000;
  const auto s = synth::generate_stream(scene, script, intr, cfg, 20);
  std::vector<Event> window(s.events.begin() + 20000, s.events.begin() + 40000);
  const StrResult r = str_solve(EventBatch::spanning(window), intr);
  EXPECT_LE((r.omega.value - w).norm(), 0.05);
}

TEST(GenerateStream, Reproducible) {
  const CameraIntrinsics intr = testing::davis_intrinsics();
  const SceneModel scene = SceneModel::sphere(3000, 21);
  const MotionScript script = MotionScript::constant({1, 0, 0}, 0.5);
  synth::StreamConfig cfg;
  cfg.event_rate = 20000;
  cfg.noise.pixel_sigma = 0.5;
  cfg.noise.outlier_fraction = 0.1;
  const auto a = synth::generate_stream(scene, script, intr, cfg, 22);
  const auto b = synth::generate_stream(scene, script, intr, cfg, 22);
  ASSERT_EQ(a.events.size(), b.events.size());
  for (std::size_t i = 0; i < a.events.size(); ++i) {
    ASSERT_EQ(a.events[i].u, b.events[i].u);
    ASSERT_EQ(a.events[i].t, b.events[i].t);
  }
}

}  // namespace
}  // namespace evstr
