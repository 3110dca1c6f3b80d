#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "evstr/core/so3.hpp"
#include "evstr/core/types.hpp"
#include "test_util.hpp"

namespace evstr {
namespace {

using std::numbers::pi;

Eigen::Matrix3d quarter_turn_z() {
  Eigen::Matrix3d m;
  m << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  return m;
}

TEST(ExpSo3, ZeroIsIdentity) {
  EXPECT_TRUE(exp_so3(Eigen::Vector3d::Zero()).matrix().isIdentity(0.0));
}

TEST(ExpSo3, QuarterTurnAboutZ) {
  const Rotation r = exp_so3({0.0, 0.0, pi / 2});
  EXPECT_TRUE(r.matrix().isApprox(quarter_turn_z(), 1e-15));
  EXPECT_LT((r.matrix() - quarter_turn_z()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ExpSo3, SeriesBranchMatchesRodriguesAcrossThreshold) {
  const Eigen::Vector3d axis = Eigen::Vector3d(1, 2, 3).normalized();
  const Rotation below = exp_so3(axis * 0.99e-8);
  const Rotation above = exp_so3(axis * 1.01e-8);
  EXPECT_LT((below.matrix() - above.matrix()).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(LogSo3, IdentityAndQuarterTurn) {
  EXPECT_EQ(log_so3(Rotation::identity()), Eigen::Vector3d::Zero());
  const Eigen::Vector3d r = log_so3(Rotation::from_matrix(quarter_turn_z()));
  EXPECT_NEAR(r.x(), 0.0, 1e-15);
  EXPECT_NEAR(r.y(), 0.0, 1e-15);
  EXPECT_NEAR(r.z(), pi / 2, 1e-15);
}

TEST(LogSo3, RoundTripProperty) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 5000; ++i) {
    const Eigen::Vector3d r = testing::random_rotvec(rng, 1e-6, pi - 1e-3);
    EXPECT_LE((log_so3(exp_so3(r)) - r).norm(), 1e-9) << r.transpose();
  }
}

TEST(LogSo3, TinyAnglesRoundTrip) {
  std::mt19937_64 rng(8);
  for (double angle : {1e-14, 1e-10, 3e-9, 1e-8, 2e-8, 1e-6}) {
    const Eigen::Vector3d r = testing::random_unit(rng) * angle;
    EXPECT_LE((log_so3(exp_so3(r)) - r).norm(), 1e-9 * angle + 1e-20);
  }
}

TEST(LogSo3, NearPiAngleRecovered) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector3d axis = testing::random_unit(rng);
    const double angle = pi - 1e-6;
    const Eigen::Vector3d r = log_so3(exp_so3(axis * angle));
    EXPECT_NEAR(r.norm(), angle, 1e-6);
    // The axis may flip sign only when the angle reaches pi.
    EXPECT_GT(r.normalized().dot(axis), 0.999);
  }
}

TEST(GeodesicDistance, BasicValues) {
  std::mt19937_64 rng(10);
  const Rotation r = testing::random_rotation(rng);
  EXPECT_NEAR(geodesic_distance(r, r), 0.0, 1e-12);
  EXPECT_NEAR(geodesic_distance(Rotation::identity(),
                                Rotation::from_matrix(quarter_turn_z())),
              pi / 2, 1e-15);
}

TEST(GeodesicDistance, SymmetricAndBounded) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 1000; ++i) {
    const Rotation a = testing::random_rotation(rng);
    const Rotation b = testing::random_rotation(rng);
    const double ab = geodesic_distance(a, b);
    EXPECT_NEAR(ab, geodesic_distance(b, a), 1e-12);
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, pi + 1e-12);
  }
}

TEST(RelativeRotation, ZeroVelocityAndQuarterTurn) {
  EXPECT_TRUE(relative_rotation(AngularVelocity(0, 0, 0), 3.0)
                  .matrix()
                  .isIdentity(0.0));
  const Rotation q = relative_rotation(AngularVelocity(0, 0, pi), 0.5);
  EXPECT_LT((q.matrix() - quarter_turn_z()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(RelativeRotation, ComposesAdditively) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> dt(0.0, 0.5);
  for (int i = 0; i < 1000; ++i) {
    const AngularVelocity w(testing::random_unit(rng) * 3.0);
    const double a = dt(rng), b = dt(rng);
    const Rotation whole = relative_rotation(w, a + b);
    const Rotation parts = relative_rotation(w, a) * relative_rotation(w, b);
    EXPECT_LT((whole.matrix() - parts.matrix()).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(RelativeRotation, DependsOnlyOnIntervalLength) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> t(0.0, 10.0);
  for (int i = 0; i < 500; ++i) {
    const AngularVelocity w(testing::random_unit(rng) * 2.0);
    const double a = t(rng), len = 0.1 * t(rng), c = t(rng);
    const double b = a + len, d = c + len;
    // Through absolute orientations R_t = exp(t w) R_0 and R_b R_a^T.
    const Rotation r0 = testing::random_rotation(rng);
    auto absolute = [&](double s) { return exp_so3(s * w.value) * r0; };
    const Rotation rab = absolute(b) * absolute(a).inverse();
    const Rotation rcd = absolute(d) * absolute(c).inverse();
    EXPECT_LT(geodesic_distance(rab, rcd), 1e-9);
    EXPECT_LT(geodesic_distance(rab, relative_rotation(w, b - a)), 1e-9);
  }
}

TEST(RelativeRotation, RejectsNegativeInterval) {
  EXPECT_THROW(relative_rotation(AngularVelocity(1, 0, 0), -1.0), Error);
}

TEST(Rotation, ValidityPreservedUnderLongComposition) {
  std::mt19937_64 rng(14);
  Rotation acc;
  for (int i = 0; i < 10000; ++i) {
    acc = (acc * exp_so3(testing::random_rotvec(rng, 0.0, 0.1))).renormalized();
  }
  const Eigen::Matrix3d gram =
      acc.matrix().transpose() * acc.matrix() - Eigen::Matrix3d::Identity();
  EXPECT_LE(gram.cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_NEAR(acc.matrix().determinant(), 1.0, 1e-9);
}

TEST(Rotation, FromMatrixRejectsReflection) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(2, 2) = -1.0;
  EXPECT_THROW(Rotation::from_matrix(m), Error);
}

}  // namespace
}  // namespace evstr
