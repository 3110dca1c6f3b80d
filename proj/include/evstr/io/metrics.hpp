#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Geometry>

#include "evstr/core/so3.hpp"
#include "evstr/core/types.hpp"
#include "evstr/error.hpp"

namespace evstr::io {

inline constexpr double kDegPerRad = 180.0 / std::numbers::pi;

// Camera-to-world orientation at time t, slerped between the two samples
// that bracket it.
inline Rotation interpolate_orientation(std::span<const TrajectoryRecord> traj, double t) {
  if (traj.empty() || !(t >= traj.front().t && t <= traj.back().t)) {
    raise(ErrorCategory::kOutOfSpan, "time outside the trajectory span");
  }
  const auto it = std::upper_bound(traj.begin(), traj.end(), t,
                                   [](double v, const TrajectoryRecord& r) { return v < r.t; });
  if (it == traj.end()) return traj.back().orientation;
  const TrajectoryRecord& a = *(it - 1);
  const TrajectoryRecord& b = *it;
  const double s = (t - a.t) / (b.t - a.t);
  const Eigen::Quaterniond q = a.orientation.quaternion().slerp(s, b.orientation.quaternion());
  return Rotation::from_quaternion(q);
}

// R_{a,b} = R_b R_a^T of the world-to-camera rotations; the trajectory
// stores their transposes.
inline Rotation gt_relative_rotation(std::span<const TrajectoryRecord> traj, double a,
                                     double b) {
  const Rotation wa = interpolate_orientation(traj, a);
  const Rotation wb = interpolate_orientation(traj, b);
  return wb.inverse() * wa;
}

// Ground-truth rotation over half of [alpha, beta]: the geodesic midpoint
// of R_{alpha,beta}, which equals R_Delta when the velocity is constant.
inline Rotation gt_half_window_rotation(std::span<const TrajectoryRecord> traj, double alpha,
                                        double beta) {
  return exp_so3(0.5 * log_so3(gt_relative_rotation(traj, alpha, beta)));
}

// RMS over batches of d(R_est, R_true) / interval, in deg/s.
inline double rms_velocity_error(std::span<const Rotation> estimates,
                                 std::span<const Rotation> truth,
                                 std::span<const double> intervals) {
  if (estimates.size() != truth.size() || truth.size() != intervals.size()) {
    raise(ErrorCategory::kLengthMismatch, "batch lists differ in length");
  }
  if (estimates.empty()) raise(ErrorCategory::kInsufficientData, "no batches");
  double sum = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    if (!(intervals[i] > 0.0)) {
      raise(ErrorCategory::kInvalidArgument, "intervals must be positive");
    }
    const double e = geodesic_distance(estimates[i], truth[i]) / intervals[i] * kDegPerRad;
    sum += e * e;
  }
  return std::sqrt(sum / static_cast<double>(estimates.size()));
}

struct OrientationErrors {
  std::vector<double> t;
  std::vector<double> degrees;
  double mean = 0.0;
};

// Geodesic error of each estimate inside the ground-truth span, after
// rotating the estimate's world frame so its first pose matches the ground
// truth at that time.
inline OrientationErrors absolute_orientation_error(std::span<const TrajectoryRecord> est,
                                                    std::span<const TrajectoryRecord> gt) {
  OrientationErrors out;
  if (gt.empty()) raise(ErrorCategory::kOutOfSpan, "empty ground truth");
  std::optional<Rotation> align;
  for (const TrajectoryRecord& r : est) {
    if (!(r.t >= gt.front().t && r.t <= gt.back().t)) continue;
    const Rotation g = interpolate_orientation(gt, r.t);
    if (!align) align = g * r.orientation.inverse();
    out.t.push_back(r.t);
    out.degrees.push_back(geodesic_distance(*align * r.orientation, g) * kDegPerRad);
  }
  if (out.t.empty()) raise(ErrorCategory::kOutOfSpan, "no estimate inside the ground-truth span");
  for (double d : out.degrees) out.mean += d;
  out.mean /= static_cast<double>(out.degrees.size());
  return out;
}

}  // namespace evstr::io
