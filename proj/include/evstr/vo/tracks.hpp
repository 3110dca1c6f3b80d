#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "evstr/error.hpp"
#include "evstr/str/registration.hpp"
#include "evstr/vo/batches.hpp"

namespace evstr {

struct TrackEvent {
  std::size_t index = 0;  // position in the stream
  double t = 0.0;
  Eigen::Vector3d ray = Eigen::Vector3d::UnitZ();
};

// Events linked by successive correspondences, in time order.
struct FeatureTrack {
  std::vector<TrackEvent> events;
  std::size_t birth = 0;  // batch that created the track
  std::size_t last = 0;   // batch that last extended it
};

// True when the surviving track count is too low to continue on the
// reduced batch.
inline bool key_batch_decision(std::size_t surviving, std::size_t threshold) {
  return surviving < threshold;
}

// Tracks of the current segment. Each batch's correspondences either extend
// a track whose end is the source event or start a new one; tracks not
// extended by the latest batch stop growing.
class TrackSet {
 public:
  // `local_to_stream[i]` is the stream index of local event i of the solved
  // batch; `times` and `rays` are indexed locally.
  void extend(std::span<const Correspondence> pairs,
              std::span<const std::size_t> local_to_stream, std::span<const double> times,
              std::span<const Eigen::Vector3d> rays, std::size_t batch) {
    if (local_to_stream.size() != times.size() || times.size() != rays.size()) {
      raise(ErrorCategory::kLengthMismatch, "track inputs differ in length");
    }
    std::unordered_map<std::size_t, std::size_t> next_end;
    next_end.reserve(pairs.size());
    members_.clear();
    for (const Correspondence& c : pairs) {
      const std::size_t src = local_to_stream[c.j];
      const std::size_t dst = local_to_stream[c.n_j];
      if (!(times[c.n_j] > times[c.j])) {
        raise(ErrorCategory::kOrdering, "correspondence runs backwards in time");
      }
      members_.push_back(src);
      members_.push_back(dst);
      std::size_t id;
      const auto it = end_.find(src);
      if (it != end_.end() && tracks_[it->second].last != batch) {
        id = it->second;
      } else {
        id = tracks_.size();
        tracks_.push_back({{{src, times[c.j], rays[c.j]}}, batch, batch});
      }
      FeatureTrack& track = tracks_[id];
      track.events.push_back({dst, times[c.n_j], rays[c.n_j]});
      track.last = batch;
      // A target claimed twice keeps the first (best-ranked) track.
      next_end.emplace(dst, id);
    }
    end_ = std::move(next_end);
    std::sort(members_.begin(), members_.end());
    members_.erase(std::unique(members_.begin(), members_.end()), members_.end());
  }

  // Number of tracks whose latest event lies in `overlap`.
  std::size_t surviving(BatchSpan overlap) const {
    std::size_t n = 0;
    for (const auto& [event, id] : end_) n += overlap.contains(event);
    return n;
  }

  // Events of the latest correspondences inside `overlap`, ascending.
  std::vector<std::size_t> tracked_events(BatchSpan overlap) const {
    std::vector<std::size_t> out;
    for (std::size_t e : members_) {
      if (overlap.contains(e)) out.push_back(e);
    }
    return out;
  }

  // Reduced batch: tracked events of the overlap followed by the new half.
  std::vector<std::size_t> reduced_batch(BatchSpan overlap, BatchSpan fresh) const {
    std::vector<std::size_t> out = tracked_events(overlap);
    out.reserve(out.size() + fresh.size());
    for (std::size_t i = fresh.begin; i < fresh.end; ++i) out.push_back(i);
    return out;
  }

  const std::vector<FeatureTrack>& tracks() const { return tracks_; }

  void clear() {
    tracks_.clear();
    end_.clear();
    members_.clear();
  }

 private:
  std::vector<FeatureTrack> tracks_;
  std::unordered_map<std::size_t, std::size_t> end_;  // end event -> track
  std::vector<std::size_t> members_;                   // latest pair events
};

}  // namespace evstr
