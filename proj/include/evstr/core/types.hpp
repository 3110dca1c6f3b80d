#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "evstr/core/so3.hpp"
#include "evstr/error.hpp"

namespace evstr {

struct Event {
  Eigen::Vector2d u = Eigen::Vector2d::Zero();  // pixels
  double t = 0.0;                               // seconds from stream start
  int p = 1;                                    // -1 or +1
};

struct AngularVelocity {
  Eigen::Vector3d value = Eigen::Vector3d::Zero();  // rad/s

  AngularVelocity() = default;
  explicit AngularVelocity(const Eigen::Vector3d& w) : value(w) {}
  AngularVelocity(double x, double y, double z) : value(x, y, z) {}

  double rate() const { return value.norm(); }
};

// Relative rotation accumulated over `dt` seconds at constant velocity. Only
// the interval length matters, not where it starts.
inline Rotation relative_rotation(const AngularVelocity& omega, double dt) {
  if (dt < 0.0) {
    raise(ErrorCategory::kInvalidArgument, "negative time interval");
  }
  return exp_so3(dt * omega.value);
}

// Timestamped camera-to-world orientation, the transpose of R_t.
struct TrajectoryRecord {
  double t = 0.0;
  Rotation orientation;
};

struct Resolution {
  int width = 0;
  int height = 0;

  long pixels() const { return static_cast<long>(width) * height; }
  bool operator==(const Resolution&) const = default;
};

// Pinhole model with two-coefficient radial distortion.
class CameraIntrinsics {
 public:
  CameraIntrinsics() = default;
  CameraIntrinsics(double fx, double fy, double cx, double cy, double k1,
                   double k2, Resolution resolution)
      : fx_(fx), fy_(fy), cx_(cx), cy_(cy), k1_(k1), k2_(k2),
        resolution_(resolution) {
    if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) ||
        !std::isfinite(fy)) {
      raise(ErrorCategory::kInvalidArgument, "focal lengths must be positive");
    }
    if (resolution.width <= 0 || resolution.height <= 0) {
      raise(ErrorCategory::kInvalidArgument, "sensor resolution must be positive");
    }
    if (!(cx >= 0.0 && cx <= resolution.width && cy >= 0.0 &&
          cy <= resolution.height)) {
      raise(ErrorCategory::kInvalidArgument,
            "principal point outside sensor bounds");
    }
    if (!std::isfinite(k1) || !std::isfinite(k2)) {
      raise(ErrorCategory::kInvalidArgument, "distortion must be finite");
    }
  }

  double fx() const { return fx_; }
  double fy() const { return fy_; }
  double cx() const { return cx_; }
  double cy() const { return cy_; }
  double k1() const { return k1_; }
  double k2() const { return k2_; }
  const Resolution& resolution() const { return resolution_; }
  bool has_distortion() const { return k1_ != 0.0 || k2_ != 0.0; }

  Eigen::Matrix3d K() const {
    Eigen::Matrix3d k;
    k << fx_, 0.0, cx_, 0.0, fy_, cy_, 0.0, 0.0, 1.0;
    return k;
  }

  bool operator==(const CameraIntrinsics&) const = default;

 private:
  double fx_ = 1.0, fy_ = 1.0, cx_ = 0.0, cy_ = 0.0;
  double k1_ = 0.0, k2_ = 0.0;
  Resolution resolution_{1, 1};
};

// Time-ordered events over [alpha, beta]. The split index M counts events
// with t <= alpha + (beta - alpha) / 2.
class EventBatch {
 public:
  EventBatch() = default;
  EventBatch(std::vector<Event> events, double alpha, double beta)
      : events_(std::move(events)), alpha_(alpha), beta_(beta) {
    if (!(beta_ >= alpha_) || !std::isfinite(alpha_) || !std::isfinite(beta_)) {
      raise(ErrorCategory::kInvalidArgument, "invalid batch window");
    }
    for (std::size_t i = 0; i < events_.size(); ++i) {
      const double t = events_[i].t;
      if (!std::isfinite(t) || t < alpha_ || t > beta_) {
        raise(ErrorCategory::kInvalidArgument,
              "event " + std::to_string(i) + " outside batch window");
      }
      if (i > 0 && t < events_[i - 1].t) {
        raise(ErrorCategory::kOrdering, "batch timestamps must be non-decreasing");
      }
    }
  }

  // Window spans the first and last timestamps.
  static EventBatch spanning(std::vector<Event> events) {
    if (events.empty()) return EventBatch();
    const double a = events.front().t;
    const double b = events.back().t;
    return EventBatch(std::move(events), a, b);
  }

  const std::vector<Event>& events() const { return events_; }
  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  double half_window() const { return 0.5 * (beta_ - alpha_); }

  std::size_t split_index() const {
    const double mid = alpha_ + half_window();
    const auto it = std::upper_bound(
        events_.begin(), events_.end(), mid,
        [](double value, const Event& e) { return value < e.t; });
    return static_cast<std::size_t>(it - events_.begin());
  }

  std::vector<double> timestamps() const {
    std::vector<double> ts(events_.size());
    for (std::size_t i = 0; i < events_.size(); ++i) ts[i] = events_[i].t;
    return ts;
  }

 private:
  std::vector<Event> events_;
  double alpha_ = 0.0;
  double beta_ = 0.0;
};

}  // namespace evstr
