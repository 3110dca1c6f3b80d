#pragma once

#include <optional>

#include <Eigen/Core>

#include "evstr/core/types.hpp"
#include "evstr/error.hpp"

namespace evstr {

inline constexpr int kUndistortIterations = 10;
inline constexpr double kUndistortTolerancePx = 1e-6;

// Unit ray through pixel `u`: normalise(K^-1 [u; 1]).
inline Eigen::Vector3d backproject(const Eigen::Vector2d& u,
                                   const CameraIntrinsics& intr) {
  Eigen::Vector3d ray((u.x() - intr.cx()) / intr.fx(),
                      (u.y() - intr.cy()) / intr.fy(), 1.0);
  return ray.normalized();
}

// Pixel of a ray in front of the camera; nullopt when z <= 0.
inline std::optional<Eigen::Vector2d> project(const Eigen::Vector3d& ray,
                                              const CameraIntrinsics& intr) {
  if (!(ray.z() > 0.0)) return std::nullopt;
  return Eigen::Vector2d(intr.fx() * ray.x() / ray.z() + intr.cx(),
                         intr.fy() * ray.y() / ray.z() + intr.cy());
}

inline double radial_factor(const Eigen::Vector2d& x,
                            const CameraIntrinsics& intr) {
  const double r2 = x.squaredNorm();
  return 1.0 + intr.k1() * r2 + intr.k2() * r2 * r2;
}

// Forward radial model applied to an ideal pixel.
inline Eigen::Vector2d distort(const Eigen::Vector2d& u,
                               const CameraIntrinsics& intr) {
  const Eigen::Vector2d x((u.x() - intr.cx()) / intr.fx(),
                          (u.y() - intr.cy()) / intr.fy());
  const Eigen::Vector2d xd = x * radial_factor(x, intr);
  return {intr.fx() * xd.x() + intr.cx(), intr.fy() * xd.y() + intr.cy()};
}

// Inverts the radial model by fixed-point iteration.
inline Eigen::Vector2d undistort(const Eigen::Vector2d& u,
                                 const CameraIntrinsics& intr) {
  if (!intr.has_distortion()) return u;
  const Eigen::Vector2d xd((u.x() - intr.cx()) / intr.fx(),
                           (u.y() - intr.cy()) / intr.fy());
  Eigen::Vector2d x = xd;
  for (int i = 0; i < kUndistortIterations; ++i) {
    const Eigen::Vector2d next = xd / radial_factor(x, intr);
    if (next == x) break;
    x = next;
  }
  const Eigen::Vector2d back = x * radial_factor(x, intr) - xd;
  const double err_px = std::max(std::abs(back.x() * intr.fx()),
                                 std::abs(back.y() * intr.fy()));
  if (!(err_px <= kUndistortTolerancePx)) {
    raise(ErrorCategory::kDegenerateInput,
          "radial undistortion did not converge");
  }
  return {intr.fx() * x.x() + intr.cx(), intr.fy() * x.y() + intr.cy()};
}

// Undistorted unit ray of a raw sensor pixel.
inline Eigen::Vector3d pixel_ray(const Eigen::Vector2d& u,
                                 const CameraIntrinsics& intr) {
  return backproject(undistort(u, intr), intr);
}

inline std::vector<Eigen::Vector3d> event_rays(std::span<const Event> events,
                                               const CameraIntrinsics& intr) {
  std::vector<Eigen::Vector3d> rays(events.size());
  for (std::size_t i = 0; i < events.size(); ++i) {
    rays[i] = pixel_ray(events[i].u, intr);
  }
  return rays;
}

}  // namespace evstr
