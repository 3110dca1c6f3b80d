#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "evstr/core/camera.hpp"
#include "evstr/core/so3.hpp"
#include "evstr/core/types.hpp"
#include "evstr/error.hpp"

namespace evstr {

// Image of warped events: accumulated kernel mass on the pixel grid.
struct Iwe {
  Resolution resolution;
  double delta = 1.0;  // kernel bandwidth, pixels
  std::vector<double> pixels;  // row-major, width * height

  double at(int x, int y) const {
    return pixels[static_cast<std::size_t>(y) * resolution.width + x];
  }
  double total() const {
    double s = 0.0;
    for (double v : pixels) s += v;
    return s;
  }
};

inline constexpr double kKernelTruncation = 3.0;  // in units of delta

// Ideal pixel of the ray rotated back to time alpha.
inline std::optional<Eigen::Vector2d> warp_ray(const Eigen::Vector3d& ray, double t,
                                               const AngularVelocity& omega,
                                               double alpha,
                                               const CameraIntrinsics& intr) {
  return project(exp_so3(-(t - alpha) * omega.value) * ray, intr);
}

inline std::optional<Eigen::Vector2d> warp_event(const Event& e,
                                                 const AngularVelocity& omega,
                                                 double alpha,
                                                 const CameraIntrinsics& intr) {
  if (e.t < alpha) {
    raise(ErrorCategory::kInvalidArgument, "event precedes the warp reference time");
  }
  return warp_ray(pixel_ray(e.u, intr), e.t, omega, alpha, intr);
}

namespace detail {

// Adds a Gaussian centred at `c` to the grid, truncated to the square of
// half-width 3 delta.
inline void splat(Iwe& iwe, const Eigen::Vector2d& c) {
  const double radius = kKernelTruncation * iwe.delta;
  const double inv = 1.0 / (2.0 * iwe.delta * iwe.delta);
  const int w = iwe.resolution.width, h = iwe.resolution.height;
  if (!(c.x() > -radius && c.x() < w - 1 + radius && c.y() > -radius &&
        c.y() < h - 1 + radius)) {
    return;
  }
  const int x0 = std::max(0, static_cast<int>(std::ceil(c.x() - radius)));
  const int x1 = std::min(w - 1, static_cast<int>(std::floor(c.x() + radius)));
  const int y0 = std::max(0, static_cast<int>(std::ceil(c.y() - radius)));
  const int y1 = std::min(h - 1, static_cast<int>(std::floor(c.y() + radius)));
  if (x0 > x1 || y0 > y1) return;
  constexpr int kMaxSpan = 64;
  if (x1 - x0 >= kMaxSpan) {
    raise(ErrorCategory::kInvalidArgument, "kernel bandwidth too large");
  }
  std::array<double, kMaxSpan> gx{};
  for (int x = x0; x <= x1; ++x) {
    const double d = x - c.x();
    gx[x - x0] = std::exp(-d * d * inv);
  }
  for (int y = y0; y <= y1; ++y) {
    const double dy = y - c.y();
    const double gy = std::exp(-dy * dy * inv);
    double* row = iwe.pixels.data() + static_cast<std::size_t>(y) * w;
    for (int x = x0; x <= x1; ++x) row[x] += gx[x - x0] * gy;
  }
}

}  // namespace detail

// IWE from precomputed rays (one per event, time-aligned with `times`).
inline Iwe accumulate_iwe(std::span<const Eigen::Vector3d> rays,
                          std::span<const double> times,
                          const AngularVelocity& omega, double alpha,
                          const CameraIntrinsics& intr, double delta,
                          Resolution resolution) {
  if (!(delta > 0.0)) raise(ErrorCategory::kInvalidArgument, "bandwidth must be positive");
  if (resolution.width <= 0 || resolution.height <= 0) {
    raise(ErrorCategory::kInvalidArgument, "empty IWE grid");
  }
  Iwe iwe{resolution, delta,
          std::vector<double>(static_cast<std::size_t>(resolution.pixels()), 0.0)};
  const double rate = omega.rate();
  const Eigen::Vector3d axis =
      rate > 0.0 ? Eigen::Vector3d(omega.value / rate) : Eigen::Vector3d::UnitZ();
  const Eigen::Matrix3d k = hat(axis);
  const Eigen::Matrix3d k2 = k * k;
  for (std::size_t i = 0; i < rays.size(); ++i) {
    const double theta = -(times[i] - alpha) * rate;
    Eigen::Vector3d r = rays[i];
    if (theta != 0.0) {
      // Rodrigues about a fixed axis; cheaper than a full exp per event.
      r = rays[i] + std::sin(theta) * (k * rays[i]) +
          (1.0 - std::cos(theta)) * (k2 * rays[i]);
    }
    if (const auto p = project(r, intr)) detail::splat(iwe, *p);
  }
  return iwe;
}

inline Iwe accumulate_iwe(const EventBatch& batch, const AngularVelocity& omega,
                          const CameraIntrinsics& intr, double delta,
                          Resolution resolution) {
  const std::vector<Eigen::Vector3d> rays = event_rays(batch.events(), intr);
  const std::vector<double> times = batch.timestamps();
  return accumulate_iwe(rays, times, omega, batch.alpha(), intr, delta, resolution);
}

// Variance of the IWE over all pixels, two-pass.
inline double contrast(const Iwe& iwe) {
  if (iwe.pixels.empty()) raise(ErrorCategory::kInvalidArgument, "empty IWE");
  const double n = static_cast<double>(iwe.pixels.size());
  double sum = 0.0;
  for (double v : iwe.pixels) sum += v;
  const double mean = sum / n;
  double ss = 0.0;
  for (double v : iwe.pixels) ss += (v - mean) * (v - mean);
  return ss / n;
}

struct CmConfig {
  double delta = 1.0;          // kernel bandwidth, pixels
  double fd_step = 1e-4;       // central-difference step, rad/s
  int max_iterations = 100;
  int restart_every = 3;       // steepest-ascent restart period
  double tolerance = 1e-6;     // relative objective change
  double initial_step = 0.1;   // first line-search trial, rad/s
  int line_search_evaluations = 12;
};

struct CmResult {
  AngularVelocity omega;
  double contrast = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

// Contrast objective with rays and times cached for repeated evaluation.
class ContrastObjective {
 public:
  ContrastObjective(const EventBatch& batch, const CameraIntrinsics& intr,
                    double delta, Resolution resolution)
      : rays_(event_rays(batch.events(), intr)),
        times_(batch.timestamps()),
        alpha_(batch.alpha()),
        intr_(intr),
        delta_(delta),
        resolution_(resolution) {
    if (batch.empty()) raise(ErrorCategory::kInsufficientData, "empty batch");
  }

  double operator()(const Eigen::Vector3d& w) {
    ++evaluations_;
    if (!w.allFinite()) {
      raise(ErrorCategory::kOptimizationFailure, "non-finite angular velocity");
    }
    const double c = contrast(
        accumulate_iwe(rays_, times_, AngularVelocity(w), alpha_, intr_, delta_, resolution_));
    if (!std::isfinite(c)) {
      raise(ErrorCategory::kOptimizationFailure, "non-finite contrast");
    }
    return c;
  }

  Eigen::Vector3d gradient(const Eigen::Vector3d& w, double h) {
    Eigen::Vector3d g;
    for (int a = 0; a < 3; ++a) {
      Eigen::Vector3d e = Eigen::Vector3d::Zero();
      e[a] = h;
      g[a] = ((*this)(w + e) - (*this)(w - e)) / (2.0 * h);
    }
    return g;
  }

  int evaluations() const { return evaluations_; }

 private:
  std::vector<Eigen::Vector3d> rays_;
  std::vector<double> times_;
  double alpha_;
  CameraIntrinsics intr_;
  double delta_;
  Resolution resolution_;
  int evaluations_ = 0;
};

namespace detail {

// Approximate maximiser of f(x + s d) for s >= 0 by bracketing followed by
// golden-section refinement. Returns the best step found and its value.
template <class F>
std::pair<double, double> line_search(F&& f, double f0, double s0, int budget) {
  constexpr double kGolden = 0.6180339887498949;
  double a = 0.0, fa = f0;
  double b = s0, fb = f(b);
  --budget;
  // Shrink until the first trial improves.
  while (fb <= fa && budget > 0 && b > 1e-9) {
    b *= 0.25;
    fb = f(b);
    --budget;
  }
  if (fb <= fa) return {0.0, f0};
  // Expand while improving.
  double c = 2.0 * b, fc = f(c);
  --budget;
  while (fc > fb && budget > 0) {
    a = b;
    fa = fb;
    b = c;
    fb = fc;
    c = 2.0 * c;
    fc = f(c);
    --budget;
  }
  if (fc > fb) return {c, fc};
  // Maximum is bracketed by [a, c] with interior b.
  double best = b, fbest = fb;
  while (budget > 0 && c - a > 1e-9) {
    const bool left = (b - a) > (c - b);
    const double x = left ? b - (1.0 - kGolden) * (b - a) : b + (1.0 - kGolden) * (c - b);
    const double fx = f(x);
    --budget;
    if (fx > fb) {
      if (left) c = b; else a = b;
      b = x;
      fb = fx;
    } else {
      if (left) a = x; else c = x;
    }
    if (fb > fbest) {
      best = b;
      fbest = fb;
    }
  }
  return {best, fbest};
}

}  // namespace detail

// Local maximiser of the contrast by nonlinear conjugate gradient
// (Polak-Ribiere, restarted periodically) on finite-difference gradients.
inline CmResult cm_solve(const EventBatch& batch, const CameraIntrinsics& intr,
                         const AngularVelocity& omega0, const CmConfig& cfg = {},
                         std::optional<Resolution> resolution = std::nullopt) {
  if (!(cfg.fd_step > 0.0) || cfg.max_iterations < 1 || cfg.restart_every < 1) {
    raise(ErrorCategory::kInvalidArgument, "bad contrast-maximisation settings");
  }
  ContrastObjective f(batch, intr, cfg.delta, resolution.value_or(intr.resolution()));
  Eigen::Vector3d w = omega0.value;
  double fw = f(w);
  Eigen::Vector3d g = f.gradient(w, cfg.fd_step);
  Eigen::Vector3d d = g;
  CmResult out;
  for (int it = 0; it < cfg.max_iterations; ++it) {
    out.iterations = it + 1;
    if (d.dot(g) <= 0.0) d = g;  // not an ascent direction
    const double norm = d.norm();
    if (!(norm > 0.0)) {
      out.converged = true;
      break;
    }
    const Eigen::Vector3d dir = d / norm;
    const auto [step, f_new] = detail::line_search(
        [&](double s) { return f(w + s * dir); }, fw, cfg.initial_step,
        cfg.line_search_evaluations);
    if (step == 0.0) {
      out.converged = true;
      break;
    }
    w += step * dir;
    const double change = std::abs(f_new - fw) / std::max(std::abs(fw), 1e-300);
    fw = f_new;
    if (change < cfg.tolerance) {
      out.converged = true;
      break;
    }
    const Eigen::Vector3d g_new = f.gradient(w, cfg.fd_step);
    if ((it + 1) % cfg.restart_every == 0) {
      d = g_new;
    } else {
      const double beta = std::max(0.0, g_new.dot(g_new - g) / std::max(g.dot(g), 1e-300));
      d = g_new + beta * d;
    }
    g = g_new;
  }
  out.omega = AngularVelocity(w);
  out.contrast = fw;
  out.evaluations = f.evaluations();
  return out;
}

}  // namespace evstr
