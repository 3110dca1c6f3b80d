#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "evstr/core/camera.hpp"
#include "evstr/core/so3.hpp"
#include "evstr/core/types.hpp"
#include "evstr/error.hpp"

namespace evstr::synth {

// Landmarks are unit rays in the world frame; the camera sees X as R_t X.
struct SceneModel {
  std::vector<Eigen::Vector3d> landmarks;
  std::uint64_t seed = 0;

  // Uniform inside a cone of half-angle `half_angle` around +z.
  static SceneModel cone(std::size_t n, double half_angle, std::uint64_t seed) {
    if (n == 0 || !(half_angle > 0.0) || half_angle > std::numbers::pi) {
      raise(ErrorCategory::kInvalidArgument, "bad scene parameters");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double cos_max = std::cos(half_angle);
    SceneModel s;
    s.seed = seed;
    s.landmarks.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double z = cos_max + (1.0 - cos_max) * u(rng);
      const double phi = 2.0 * std::numbers::pi * u(rng);
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      s.landmarks.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
    }
    return s;
  }

  // Uniform over the whole sphere.
  static SceneModel sphere(std::size_t n, std::uint64_t seed) {
    return cone(n, std::numbers::pi, seed);
  }

  // Cone just wide enough to cover the sensor plus `margin` radians.
  static SceneModel covering(std::size_t n, const CameraIntrinsics& intr,
                             double margin, std::uint64_t seed) {
    const Resolution& res = intr.resolution();
    double widest = 0.0;
    for (double x : {0.0, static_cast<double>(res.width)}) {
      for (double y : {0.0, static_cast<double>(res.height)}) {
        const Eigen::Vector3d r = backproject({x, y}, intr);
        widest = std::max(widest, std::acos(std::clamp(r.z(), -1.0, 1.0)));
      }
    }
    return cone(n, std::min(widest + margin, std::numbers::pi), seed);
  }
};

struct NoiseModel {
  double pixel_sigma = 0.0;
  // Uniform time-stamp noise in [-j, +j]; unset means 0.1 * eps_T.
  std::optional<double> time_jitter;
  double outlier_fraction = 0.0;
  // Round pixel coordinates to the sensor grid.
  bool quantize = false;

  void validate() const {
    if (!(pixel_sigma >= 0.0) || !std::isfinite(pixel_sigma)) {
      raise(ErrorCategory::kInvalidArgument, "pixel noise must be >= 0");
    }
    if (time_jitter && !(*time_jitter >= 0.0)) {
      raise(ErrorCategory::kInvalidArgument, "time jitter must be >= 0");
    }
    if (!(outlier_fraction >= 0.0 && outlier_fraction < 1.0)) {
      raise(ErrorCategory::kInvalidArgument, "outlier fraction must be in [0, 1)");
    }
  }
};

inline constexpr int kOutlier = -1;

struct SyntheticBatch {
  EventBatch batch;
  Rotation r_delta;         // ground-truth half-window rotation
  Rotation r_alpha_beta;    // ground-truth full-window rotation
  AngularVelocity omega;
  std::vector<int> source;  // landmark per event, kOutlier for clutter
};

namespace detail {

inline bool in_frame(const Eigen::Vector2d& u, const Resolution& res) {
  return u.x() >= 0.0 && u.y() >= 0.0 && u.x() <= res.width - 1.0 &&
         u.y() <= res.height - 1.0;
}

// Raw sensor pixel of a camera-frame ray, nullopt when not imaged.
inline std::optional<Eigen::Vector2d> image(const Eigen::Vector3d& ray,
                                            const CameraIntrinsics& intr) {
  auto p = project(ray, intr);
  if (!p) return std::nullopt;
  if (intr.has_distortion()) p = distort(*p, intr);
  if (!in_frame(*p, intr.resolution())) return std::nullopt;
  return p;
}

inline Eigen::Vector2d corrupt(Eigen::Vector2d u, const NoiseModel& noise,
                               const Resolution& res, std::mt19937_64& rng) {
  if (noise.pixel_sigma > 0.0) {
    std::normal_distribution<double> n(0.0, noise.pixel_sigma);
    u += Eigen::Vector2d(n(rng), n(rng));
  }
  if (noise.quantize) u = u.array().round().matrix();
  u.x() = std::clamp(u.x(), 0.0, res.width - 1.0);
  u.y() = std::clamp(u.y(), 0.0, res.height - 1.0);
  return u;
}

inline Eigen::Vector2d uniform_pixel(const Resolution& res, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> x(0.0, res.width - 1.0);
  std::uniform_real_distribution<double> y(0.0, res.height - 1.0);
  return {x(rng), y(rng)};
}

inline int random_polarity(std::mt19937_64& rng) {
  return std::bernoulli_distribution(0.5)(rng) ? 1 : -1;
}

}  // namespace detail

// Events from landmarks seen under constant angular velocity, with the
// camera frame at alpha equal to the world frame. Every inlier is emitted as a
// pair (t, t + delta) so that the second ray is exactly R_delta times the
// first before noise.
inline SyntheticBatch generate_batch(const SceneModel& scene,
                                     const AngularVelocity& omega, double alpha,
                                     double beta, std::size_t n_events,
                                     const CameraIntrinsics& intr,
                                     const NoiseModel& noise,
                                     std::uint64_t seed) {
  noise.validate();
  if (!(beta > alpha) || n_events < 2 || scene.landmarks.empty()) {
    raise(ErrorCategory::kInvalidArgument, "bad batch parameters");
  }
  std::mt19937_64 rng(seed);
  const double delta = 0.5 * (beta - alpha);
  const double jitter = noise.time_jitter.value_or(0.1 * 0.02 * (beta - alpha));
  const Resolution& res = intr.resolution();

  const auto n_out = static_cast<std::size_t>(
      std::llround(noise.outlier_fraction * static_cast<double>(n_events)));
  const std::size_t n_in = n_events - n_out;

  struct Tagged {
    Event e;
    int source;
  };
  std::vector<Tagged> out;
  out.reserve(n_events);

  std::uniform_real_distribution<double> first_half(alpha, alpha + delta);
  std::uniform_real_distribution<double> jit(-jitter, jitter);
  std::uniform_int_distribution<std::size_t> pick(0, scene.landmarks.size() - 1);
  auto stamp = [&](double t) {
    return jitter > 0.0 ? std::clamp(t + jit(rng), alpha, beta) : t;
  };

  const Rotation r_delta = exp_so3(delta * omega.value);
  std::size_t emitted = 0;
  int failures = 0;
  while (emitted < n_in) {
    const double t = first_half(rng);
    const std::size_t l = pick(rng);
    const Eigen::Vector3d ray0 = exp_so3((t - alpha) * omega.value) * scene.landmarks[l];
    const Eigen::Vector3d ray1 = r_delta * ray0;
    const auto p0 = detail::image(ray0, intr);
    const auto p1 = detail::image(ray1, intr);
    if (!p0 || !p1) {
      if (++failures > 1000 * static_cast<int>(std::max<std::size_t>(n_in, 1))) {
        raise(ErrorCategory::kDegenerateInput, "scene not visible in the window");
      }
      continue;
    }
    const int id = static_cast<int>(l);
    out.push_back({{detail::corrupt(*p0, noise, res, rng), stamp(t),
                    detail::random_polarity(rng)}, id});
    ++emitted;
    if (emitted < n_in) {
      out.push_back({{detail::corrupt(*p1, noise, res, rng), stamp(t + delta),
                      detail::random_polarity(rng)}, id});
      ++emitted;
    }
  }
  std::uniform_real_distribution<double> any_time(alpha, beta);
  for (std::size_t i = 0; i < n_out; ++i) {
    out.push_back({{detail::uniform_pixel(res, rng), any_time(rng),
                    detail::random_polarity(rng)}, kOutlier});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Tagged& a, const Tagged& b) { return a.e.t < b.e.t; });

  std::vector<Event> events;
  std::vector<int> source;
  events.reserve(out.size());
  source.reserve(out.size());
  for (const Tagged& x : out) {
    events.push_back(x.e);
    source.push_back(x.source);
  }
  return {EventBatch(std::move(events), alpha, beta), r_delta,
          exp_so3(2.0 * delta * omega.value), omega, std::move(source)};
}

struct MotionSegment {
  double duration = 0.0;  // seconds
  Eigen::Vector3d omega = Eigen::Vector3d::Zero();
};

// Piecewise-constant angular velocity: R_t = exp((t - t_k) w_k) R_{t_k}.
class MotionScript {
 public:
  MotionScript() = default;
  MotionScript(std::vector<MotionSegment> segments, Rotation initial = {})
      : segments_(std::move(segments)), initial_(initial) {
    if (segments_.empty()) {
      raise(ErrorCategory::kInvalidArgument, "motion script has no segments");
    }
    starts_.reserve(segments_.size());
    Rotation r = initial_;
    double t = 0.0;
    for (const MotionSegment& s : segments_) {
      if (!(s.duration > 0.0) || !s.omega.allFinite()) {
        raise(ErrorCategory::kInvalidArgument, "segment durations must be positive");
      }
      starts_.push_back({t, r});
      r = exp_so3(s.duration * s.omega) * r;
      t += s.duration;
    }
    end_ = {t, r};
  }

  static MotionScript constant(const Eigen::Vector3d& omega, double duration,
                               Rotation initial = {}) {
    return MotionScript({{duration, omega}}, initial);
  }

  const std::vector<MotionSegment>& segments() const { return segments_; }
  const Rotation& initial() const { return initial_; }
  double duration() const { return end_.t; }

  std::size_t segment_at(double t) const {
    const auto it = std::upper_bound(
        starts_.begin(), starts_.end(), t,
        [](double v, const TrajectoryRecord& s) { return v < s.t; });
    const auto k = static_cast<std::size_t>(it - starts_.begin());
    return k == 0 ? 0 : k - 1;
  }

  // World-to-camera rotation R_t.
  Rotation orientation_at(double t) const {
    const std::size_t k = segment_at(t);
    return exp_so3((t - starts_[k].t) * segments_[k].omega) * starts_[k].orientation;
  }

  Eigen::Vector3d omega_at(double t) const { return segments_[segment_at(t)].omega; }

 private:
  std::vector<MotionSegment> segments_;
  Rotation initial_;
  std::vector<TrajectoryRecord> starts_;  // segment start time and R
  TrajectoryRecord end_;
};

struct StreamConfig {
  double event_rate = 100000.0;     // events per second
  double refresh_interval = 5e-3;   // visible-set recomputation period (s)
  double gt_rate = 125.0;           // ground-truth samples per second
  NoiseModel noise;                 // time_jitter unset means none
};

struct SyntheticStream {
  std::vector<Event> events;
  std::vector<int> source;
  // Camera-to-world orientation R_t^T, sampled on a regular grid.
  std::vector<TrajectoryRecord> trajectory;
};

// One event per slot at times (i + U) / rate, each drawn from a random
// currently visible landmark.
inline SyntheticStream generate_stream(const SceneModel& scene,
                                       const MotionScript& script,
                                       const CameraIntrinsics& intr,
                                       const StreamConfig& cfg,
                                       std::uint64_t seed) {
  cfg.noise.validate();
  if (!(cfg.event_rate > 0.0) || !(cfg.refresh_interval > 0.0) ||
      !(cfg.gt_rate > 0.0) || scene.landmarks.empty()) {
    raise(ErrorCategory::kInvalidArgument, "bad stream parameters");
  }
  std::mt19937_64 rng(seed);
  const Resolution& res = intr.resolution();
  const double duration = script.duration();
  const double jitter = cfg.noise.time_jitter.value_or(0.0);

  // Coarse visibility test: angle to the optical axis below the widest
  // corner ray plus the rotation possible within one refresh interval.
  double max_rate = 0.0;
  for (const MotionSegment& s : script.segments()) {
    max_rate = std::max(max_rate, s.omega.norm());
  }
  double widest = 0.0;
  for (double x : {0.0, res.width - 1.0}) {
    for (double y : {0.0, res.height - 1.0}) {
      Eigen::Vector2d u(x, y);
      if (intr.has_distortion()) u = undistort(u, intr);
      widest = std::max(widest, std::acos(std::clamp(backproject(u, intr).z(), -1.0, 1.0)));
    }
  }
  const double cos_limit =
      std::cos(std::min(std::numbers::pi, widest + max_rate * cfg.refresh_interval + 1e-3));

  SyntheticStream out;
  const auto n = static_cast<std::size_t>(std::floor(duration * cfg.event_rate));
  out.events.reserve(n);
  out.source.reserve(n);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> jit(-jitter, jitter);
  std::bernoulli_distribution outlier(cfg.noise.outlier_fraction);
  std::vector<std::size_t> visible;
  double refreshed_until = -1.0;
  double prev_t = 0.0;

  for (std::size_t i = 0; i < n; ++i) {
    const double t_true = (static_cast<double>(i) + unit(rng)) / cfg.event_rate;
    if (t_true >= refreshed_until) {
      const double block = std::floor(t_true / cfg.refresh_interval) * cfg.refresh_interval;
      refreshed_until = block + cfg.refresh_interval;
      const Eigen::Vector3d axis = script.orientation_at(block).matrix().row(2);
      visible.clear();
      for (std::size_t l = 0; l < scene.landmarks.size(); ++l) {
        if (axis.dot(scene.landmarks[l]) >= cos_limit) visible.push_back(l);
      }
    }
    double t = jitter > 0.0 ? std::clamp(t_true + jit(rng), 0.0, duration) : t_true;
    t = std::max(t, prev_t);
    prev_t = t;

    Event e{Eigen::Vector2d::Zero(), t, detail::random_polarity(rng)};
    int src = kOutlier;
    if (!outlier(rng) && !visible.empty()) {
      const Rotation r = script.orientation_at(t_true);
      std::uniform_int_distribution<std::size_t> pick(0, visible.size() - 1);
      for (int attempt = 0; attempt < 64; ++attempt) {
        const std::size_t l = visible[pick(rng)];
        if (const auto p = detail::image(r * scene.landmarks[l], intr)) {
          e.u = detail::corrupt(*p, cfg.noise, res, rng);
          src = static_cast<int>(l);
          break;
        }
      }
    }
    if (src == kOutlier) e.u = detail::uniform_pixel(res, rng);
    out.events.push_back(e);
    out.source.push_back(src);
  }

  const auto samples = static_cast<std::size_t>(std::floor(duration * cfg.gt_rate + 1e-9));
  out.trajectory.reserve(samples + 1);
  for (std::size_t k = 0; k <= samples; ++k) {
    const double t = static_cast<double>(k) / cfg.gt_rate;
    out.trajectory.push_back({t, script.orientation_at(t).inverse()});
  }
  return out;
}

}  // namespace evstr::synth
