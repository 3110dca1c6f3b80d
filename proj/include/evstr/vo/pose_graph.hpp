#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "evstr/core/so3.hpp"
#include "evstr/core/types.hpp"
#include "evstr/error.hpp"
#include "evstr/str/registration.hpp"
#include "evstr/vo/batches.hpp"
#include "evstr/vo/rotation_averaging.hpp"
#include "evstr/vo/tracks.hpp"

namespace evstr {

// A solved batch in the pose graph. Its orientation refers to time `beta`.
struct PoseNode {
  std::size_t batch = 0;
  BatchSpan span;
  double alpha = 0.0;
  double beta = 0.0;
  AngularVelocity omega;  // estimated within the batch
};

// Ray observed at time t, carried to the node's reference time with the
// node's constant angular velocity.
inline Eigen::Vector3d transport(const PoseNode& node, const TrackEvent& e) {
  return exp_so3((node.beta - e.t) * node.omega.value) * e.ray;
}

struct TrimmedWahba {
  Rotation r;
  std::size_t used = 0;
  int iterations = 0;
};

// Rotation R minimising the sum of the K smallest ||dst - R src||^2 by
// alternating selection and closed-form solves until the selection settles.
inline TrimmedWahba trimmed_wahba(std::span<const Eigen::Vector3d> src,
                                  std::span<const Eigen::Vector3d> dst, double trim_fraction,
                                  int max_iterations = 20) {
  if (src.size() != dst.size()) raise(ErrorCategory::kLengthMismatch, "pair lists differ");
  if (!(trim_fraction > 0.0 && trim_fraction <= 1.0)) {
    raise(ErrorCategory::kInvalidArgument, "trim fraction must be in (0, 1]");
  }
  const std::size_t k = std::max<std::size_t>(
      2, static_cast<std::size_t>(std::floor(trim_fraction * static_cast<double>(src.size()))));
  TrimmedWahba out;
  out.r = wahba_update(src, dst);
  std::vector<std::size_t> previous;
  std::vector<double> residuals(src.size());
  std::vector<Eigen::Vector3d> s, d;
  for (int it = 0; it < max_iterations; ++it) {
    out.iterations = it + 1;
    for (std::size_t i = 0; i < src.size(); ++i) residuals[i] = (dst[i] - out.r * src[i]).norm();
    std::vector<std::size_t> sel = trimmed_selection(residuals, k, false).indices;
    if (sel == previous) break;
    s.clear();
    d.clear();
    for (std::size_t i : sel) {
      s.push_back(src[i]);
      d.push_back(dst[i]);
    }
    out.r = wahba_update(s, d);
    out.used = sel.size();
    previous = std::move(sel);
  }
  return out;
}

struct PairwiseConfig {
  double trim_fraction = 0.8;
  std::size_t min_shared_tracks = 2;
  bool weight_by_tracks = false;
};

// Track events seen by each node pair (u < v): for every track present in
// both, its earliest event in u and its latest event in v, carried to the
// nodes' reference times.
inline std::map<std::pair<std::size_t, std::size_t>,
                std::pair<std::vector<Eigen::Vector3d>, std::vector<Eigen::Vector3d>>>
shared_observations(std::span<const PoseNode> nodes, std::span<const FeatureTrack> tracks) {
  std::map<std::pair<std::size_t, std::size_t>,
           std::pair<std::vector<Eigen::Vector3d>, std::vector<Eigen::Vector3d>>>
      out;
  struct Seen {
    std::size_t node;
    const TrackEvent* first;
    const TrackEvent* last;
    Eigen::Vector3d first_ray, last_ray;
  };
  std::vector<Seen> seen;
  for (const FeatureTrack& track : tracks) {
    seen.clear();
    for (const TrackEvent& e : track.events) {
      // Nodes are ordered by span; an event lies in at most a few of them.
      const auto lo = std::partition_point(nodes.begin(), nodes.end(), [&](const PoseNode& n) {
        return n.span.end <= e.index;
      });
      for (auto it = lo; it != nodes.end() && it->span.begin <= e.index; ++it) {
        if (!it->span.contains(e.index)) continue;
        const std::size_t u = static_cast<std::size_t>(it - nodes.begin());
        auto s = std::find_if(seen.begin(), seen.end(), [&](const Seen& x) { return x.node == u; });
        if (s == seen.end()) {
          seen.push_back({u, &e, &e, {}, {}});
        } else {
          s->last = &e;
        }
      }
    }
    if (seen.size() < 2) continue;
    for (Seen& a : seen) {
      a.first_ray = transport(nodes[a.node], *a.first);
      a.last_ray = transport(nodes[a.node], *a.last);
    }
    for (const Seen& a : seen) {
      for (const Seen& b : seen) {
        if (b.node <= a.node || a.first == b.last) continue;
        auto& pairs = out[{a.node, b.node}];
        pairs.first.push_back(a.first_ray);
        pairs.second.push_back(b.last_ray);
      }
    }
  }
  return out;
}

// Relative rotations between all node pairs that share enough tracks.
// Degenerate pairs are omitted.
inline std::vector<RelativeEdge> estimate_pairwise(std::span<const PoseNode> nodes,
                                                   std::span<const FeatureTrack> tracks,
                                                   const PairwiseConfig& cfg = {}) {
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    if (nodes[i].span.begin < nodes[i - 1].span.begin) {
      raise(ErrorCategory::kOrdering, "pose nodes must be ordered by stream position");
    }
  }
  std::vector<RelativeEdge> edges;
  for (const auto& [key, pairs] : shared_observations(nodes, tracks)) {
    const auto& [src, dst] = pairs;
    if (src.size() < std::max<std::size_t>(cfg.min_shared_tracks, 2)) continue;
    try {
      const TrimmedWahba w = trimmed_wahba(src, dst, cfg.trim_fraction);
      edges.push_back({key.first, key.second, w.r,
                       cfg.weight_by_tracks ? static_cast<double>(src.size()) : 1.0});
    } catch (const Error& e) {
      if (e.category() != ErrorCategory::kDegenerateGeometry) throw;
    }
  }
  return edges;
}

}  // namespace evstr
