#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "evstr/core/camera.hpp"
#include "evstr/core/so3.hpp"
#include "evstr/core/types.hpp"
#include "evstr/error.hpp"
#include "evstr/str/registration.hpp"
#include "evstr/vo/batches.hpp"
#include "evstr/vo/pose_graph.hpp"
#include "evstr/vo/rotation_averaging.hpp"
#include "evstr/vo/tracks.hpp"

namespace evstr {

struct VoConfig {
  std::size_t batch_size = 30000;
  std::size_t key_threshold = 2000;  // surviving tracks below this start a key batch
  StrConfig str;                     // its trim settings are overridden per batch
  double track_trim = 0.8;           // continuation batches: K = floor(0.8 |E_bar|)
  double key_trim = 0.4;             // key batches: K = floor(0.4 N)
  PairwiseConfig pairwise;
  AveragingConfig averaging;
  // Offer each batch's solve the previous batch's velocity as a start.
  bool warm_start = true;

  void validate() const {
    if (batch_size < 4 || batch_size % 2 != 0) {
      raise(ErrorCategory::kInvalidArgument, "batch size must be even and at least 4");
    }
    if (!(track_trim > 0.0 && track_trim <= 1.0) || !(key_trim > 0.0 && key_trim <= 1.0)) {
      raise(ErrorCategory::kInvalidArgument, "trim fractions must be in (0, 1]");
    }
    if (!(static_cast<double>(key_threshold) < key_trim * static_cast<double>(batch_size))) {
      raise(ErrorCategory::kInvalidArgument,
            "key-batch threshold must be below the key-batch trim count");
    }
    str.validate();
    averaging.validate();
  }
};

struct BatchReport {
  std::size_t batch = 0;
  double alpha = 0.0;
  double beta = 0.0;
  bool key = false;
  bool solved = false;
  std::size_t surviving_tracks = 0;
  std::size_t input_events = 0;
  std::size_t correspondences = 0;
  int iterations = 0;
  std::size_t tree_searches = 0;
  double solve_ms = 0.0;  // wall time of the registration step
  AngularVelocity omega;
  std::string error;
};

struct VoResult {
  // Camera-to-world orientations at each solved batch's window end.
  std::vector<TrajectoryRecord> averaged;
  std::vector<TrajectoryRecord> chained;
  std::vector<BatchReport> batches;
  std::vector<std::string> warnings;
  std::size_t segments = 0;
};

namespace detail {

// Rays of one batch span, reusing the overlapping half of the previous one.
class RayWindow {
 public:
  RayWindow(std::span<const Event> stream, const CameraIntrinsics& intr)
      : stream_(stream), intr_(intr) {}

  void advance(BatchSpan span) {
    std::vector<Eigen::Vector3d> next(span.size());
    for (std::size_t i = span.begin; i < span.end; ++i) {
      next[i - span.begin] = covered_.contains(i) ? rays_[i - covered_.begin]
                                                  : pixel_ray(stream_[i].u, intr_);
    }
    rays_ = std::move(next);
    covered_ = span;
  }

  const Eigen::Vector3d& operator[](std::size_t i) const { return rays_[i - covered_.begin]; }

 private:
  std::span<const Event> stream_;
  CameraIntrinsics intr_;
  BatchSpan covered_;
  std::vector<Eigen::Vector3d> rays_;
};

}  // namespace detail

// Rotational visual odometry over overlapping batches: STR per batch, feature
// tracks through the overlaps, key batches when tracks thin out, and robust
// rotation averaging of each segment's pose graph. Also returns the chained
// trajectory that composes per-batch velocities without averaging.
inline VoResult vo_run(std::span<const Event> stream, const CameraIntrinsics& intr,
                       const VoConfig& cfg = {}) {
  cfg.validate();
  for (std::size_t i = 1; i < stream.size(); ++i) {
    if (stream[i].t < stream[i - 1].t) {
      raise(ErrorCategory::kOrdering, "stream time stamps must be non-decreasing");
    }
  }
  VoResult out;
  const std::size_t half = cfg.batch_size / 2;
  detail::RayWindow rays(stream, intr);
  TrackSet tracks;

  struct Pose {
    double t;
    Rotation r;  // world to camera
  };
  std::optional<Pose> last_averaged, last_chained;
  std::vector<PoseNode> nodes;
  std::vector<Rotation> nodes_chained;
  Rotation anchor;

  auto emit = [](std::vector<TrajectoryRecord>& traj, double t, const Rotation& r) {
    traj.push_back({t, r.inverse()});
  };

  auto close_segment = [&] {
    if (nodes.empty()) return;
    const std::vector<RelativeEdge> edges = estimate_pairwise(nodes, tracks.tracks(), cfg.pairwise);
    // Fallback for detached nodes: the chained motion relative to the anchor.
    std::vector<Rotation> fallback;
    for (const Rotation& c : nodes_chained) fallback.push_back(c * nodes_chained[0].inverse() * anchor);
    const AveragingResult avg =
        rotation_averaging(nodes.size(), edges, anchor, cfg.averaging, fallback);
    for (const std::string& w : avg.warnings) {
      out.warnings.push_back("segment at batch " + std::to_string(nodes[0].batch) + ": " + w);
    }
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      emit(out.averaged, nodes[i].beta, avg.orientations[i]);
    }
    last_averaged = Pose{nodes.back().beta, avg.orientations.back()};
    ++out.segments;
    nodes.clear();
    nodes_chained.clear();
    tracks.clear();
  };

  std::vector<std::size_t> input;
  std::vector<double> times;
  std::vector<Eigen::Vector3d> input_rays;
  std::vector<int> polarities;
  bool force_key = true;
  std::optional<AngularVelocity> previous_omega;
  const std::vector<BatchSpan> spans = stream_batches(stream.size(), cfg.batch_size);
  for (std::size_t b = 0; b < spans.size(); ++b) {
    const BatchSpan span = spans[b];
    const BatchSpan overlap{span.begin, span.begin + half};
    const BatchSpan fresh{span.begin + half, span.end};
    rays.advance(span);

    BatchReport report;
    report.batch = b;
    report.alpha = stream[span.begin].t;
    report.beta = stream[span.end - 1].t;
    report.surviving_tracks = tracks.surviving(overlap);
    report.key = force_key || key_batch_decision(report.surviving_tracks, cfg.key_threshold);

    StrConfig str = cfg.str;
    if (cfg.warm_start && previous_omega) {
      str.initial = exp_so3(0.5 * (report.beta - report.alpha) * previous_omega->value);
    }
    input.clear();
    if (report.key) {
      for (std::size_t i = span.begin; i < span.end; ++i) input.push_back(i);
      str.trim_count = static_cast<std::size_t>(
          std::floor(cfg.key_trim * static_cast<double>(cfg.batch_size)));
    } else {
      input = tracks.reduced_batch(overlap, fresh);
      const std::size_t tracked = input.size() - fresh.size();
      str.trim_count = static_cast<std::size_t>(
          std::floor(cfg.track_trim * static_cast<double>(tracked)));
    }
    report.input_events = input.size();
    times.resize(input.size());
    input_rays.resize(input.size());
    polarities.resize(input.size());
    for (std::size_t i = 0; i < input.size(); ++i) {
      times[i] = stream[input[i]].t;
      input_rays[i] = rays[input[i]];
      polarities[i] = stream[input[i]].p;
    }

    StrResult result;
    const auto started = std::chrono::steady_clock::now();
    try {
      result = str_solve(StrInput{times, input_rays, polarities, report.alpha, report.beta}, str);
      report.solve_ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - started)
                            .count();
    } catch (const Error& e) {
      report.error = std::string(to_string(e.category())) + ": " + e.what();
      out.warnings.push_back("batch " + std::to_string(b) + " skipped: " + report.error);
      out.batches.push_back(report);
      force_key = true;
      previous_omega.reset();
      continue;
    }
    report.solved = true;
    report.correspondences = result.correspondences.size();
    report.iterations = result.iterations;
    report.tree_searches = result.tree_searches;
    report.omega = result.omega;
    out.batches.push_back(report);

    if (report.key) close_segment();
    tracks.extend(result.correspondences, input, times, input_rays, b);

    // Chained orientation: the batch's own velocity over the gap since the
    // previous pose; the first batch starts from identity at its alpha.
    const auto propagate = [&](const std::optional<Pose>& prev) {
      return prev ? exp_so3((report.beta - prev->t) * result.omega.value) * prev->r
                  : result.r_alpha_beta;
    };
    const Rotation chained = propagate(last_chained);
    last_chained = Pose{report.beta, chained};
    emit(out.chained, report.beta, chained);
    if (report.key) anchor = propagate(last_averaged);
    nodes.push_back({b, span, report.alpha, report.beta, result.omega});
    nodes_chained.push_back(chained);
    force_key = false;
    previous_omega = result.omega;
  }
  close_segment();
  return out;
}

}  // namespace evstr
