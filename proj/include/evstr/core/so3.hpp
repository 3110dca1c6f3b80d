#pragma once

#include <cmath>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "evstr/error.hpp"

namespace evstr {

// Below this rotation angle exp/log switch to their series expansions.
inline constexpr double kSmallAngle = 1e-8;

inline Eigen::Matrix3d hat(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

// Element of SO(3), stored as a matrix. The rotation-vector view is computed
// on demand through log().
class Rotation {
 public:
  Rotation() : m_(Eigen::Matrix3d::Identity()) {}

  static Rotation identity() { return Rotation(); }

  // Validates orthonormality and det = +1 within `tol`.
  static Rotation from_matrix(const Eigen::Matrix3d& m, double tol = 1e-9) {
    const Eigen::Matrix3d gram = m.transpose() * m - Eigen::Matrix3d::Identity();
    if (!m.allFinite() || gram.cwiseAbs().maxCoeff() > tol ||
        std::abs(m.determinant() - 1.0) > tol) {
      raise(ErrorCategory::kInvalidArgument, "matrix is not a rotation");
    }
    return Rotation(m, Unchecked{});
  }

  // Nearest rotation in the Frobenius sense; used to clean up drift.
  static Rotation project(const Eigen::Matrix3d& m) {
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(
        m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
    d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0
                  ? -1.0
                  : 1.0;
    return Rotation(svd.matrixU() * d * svd.matrixV().transpose(),
                    Unchecked{});
  }

  static Rotation from_quaternion(const Eigen::Quaterniond& q) {
    return Rotation(q.normalized().toRotationMatrix(), Unchecked{});
  }

  const Eigen::Matrix3d& matrix() const { return m_; }

  // Unit quaternion with non-negative scalar part.
  Eigen::Quaterniond quaternion() const {
    Eigen::Quaterniond q(m_);
    q.normalize();
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    return q;
  }

  Eigen::Vector3d log() const;

  double angle() const { return log().norm(); }

  Rotation inverse() const { return Rotation(m_.transpose(), Unchecked{}); }

  Rotation renormalized() const { return project(m_); }

  Rotation operator*(const Rotation& other) const {
    return Rotation(m_ * other.m_, Unchecked{});
  }

  Eigen::Vector3d operator*(const Eigen::Vector3d& v) const { return m_ * v; }

 private:
  struct Unchecked {};
  Rotation(const Eigen::Matrix3d& m, Unchecked) : m_(m) {}

  friend Rotation exp_so3(const Eigen::Vector3d& r);

  Eigen::Matrix3d m_;
};

// Rodrigues formula.
inline Rotation exp_so3(const Eigen::Vector3d& r) {
  const double theta = r.norm();
  const Eigen::Matrix3d k = hat(r);
  if (theta < kSmallAngle) {
    return Rotation(Eigen::Matrix3d::Identity() + k + 0.5 * k * k,
                    Rotation::Unchecked{});
  }
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Rotation(Eigen::Matrix3d::Identity() + a * k + b * k * k,
                  Rotation::Unchecked{});
}

// Principal logarithm through the quaternion, which stays well conditioned
// near both 0 and pi.
inline Eigen::Vector3d log_so3(const Rotation& rotation) {
  const Eigen::Quaterniond q = rotation.quaternion();
  const Eigen::Vector3d v = q.vec();
  const double s = v.norm();
  if (s < 0.5 * kSmallAngle) {
    // theta = 2 asin(s), v / s * theta ~ 2 v / w for small s.
    return 2.0 * v / q.w();
  }
  const double theta = 2.0 * std::atan2(s, q.w());
  return v * (theta / s);
}

inline Eigen::Vector3d Rotation::log() const { return log_so3(*this); }

inline double geodesic_distance(const Rotation& a, const Rotation& b) {
  return log_so3(a * b.inverse()).norm();
}

}  // namespace evstr
