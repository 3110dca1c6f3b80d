#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "evstr/error.hpp"
#include "evstr/indexing/interval_index.hpp"

namespace evstr {

inline double chord_sq(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

struct RayHit {
  std::size_t index = 0;
  double distance = 0.0;  // chord length ||u_k - q||
};

namespace detail {

inline constexpr std::size_t kMaxNeighbours = 8;

// Sorted list of the k best (d2, key) pairs seen so far.
struct KBest {
  explicit KBest(std::size_t k) : capacity(k) {}

  std::size_t capacity;
  std::size_t size = 0;
  double d2[kMaxNeighbours] = {};
  std::size_t key[kMaxNeighbours] = {};

  double bound() const {
    return size < capacity ? std::numeric_limits<double>::infinity()
                           : d2[capacity - 1];
  }

  void offer(double d, std::size_t k) {
    auto before = [&](std::size_t i) {
      return d < d2[i] || (d == d2[i] && k < key[i]);
    };
    if (size == capacity && !before(size - 1)) return;
    for (std::size_t i = 0; i < size; ++i) {
      if (key[i] == k) return;  // already offered as a seed
    }
    std::size_t pos = size < capacity ? size : capacity - 1;
    while (pos > 0 && before(pos - 1)) {
      d2[pos] = d2[pos - 1];
      key[pos] = key[pos - 1];
      --pos;
    }
    d2[pos] = d;
    key[pos] = k;
    if (size < capacity) ++size;
  }
};

}  // namespace detail

// Exact nearest-neighbour kd-tree over unit rays. Keys are event indices;
// queries may be restricted to a contiguous key range, which returns exactly
// what a kd-tree built over that range alone would. Ties go to the smaller key.
class RayIndex {
 public:
  RayIndex() = default;

  // `rays[i]` carries key `first_index + i`.
  explicit RayIndex(std::span<const Eigen::Vector3d> rays,
                    std::size_t first_index = 0) {
    if (rays.empty()) {
      raise(ErrorCategory::kInvalidArgument, "ray index needs at least one ray");
    }
    points_.reserve(rays.size());
    for (std::size_t i = 0; i < rays.size(); ++i) {
      points_.push_back({rays[i], first_index + i});
    }
    nodes_.reserve(2 * rays.size() / kLeafSize + 2);
    build(0, static_cast<std::uint32_t>(points_.size()));
    index_slots();
  }

  // Explicit (distinct) keys, e.g. a polarity-filtered subset of a batch.
  RayIndex(std::span<const Eigen::Vector3d> rays,
           std::span<const std::size_t> keys) {
    if (rays.empty() || rays.size() != keys.size()) {
      raise(ErrorCategory::kInvalidArgument,
            "ray index needs at least one ray and one key per ray");
    }
    points_.reserve(rays.size());
    for (std::size_t i = 0; i < rays.size(); ++i) {
      points_.push_back({rays[i], keys[i]});
    }
    nodes_.reserve(2 * rays.size() / kLeafSize + 2);
    build(0, static_cast<std::uint32_t>(points_.size()));
    index_slots();
  }

  static constexpr std::size_t kMaxNeighbours = detail::kMaxNeighbours;

  // Up to `count` nearest keys in `range`, ascending by (distance, key),
  // written to `out`; returns how many were found. Keys in `seeds` that lie
  // in the range only tighten the initial bound.
  std::size_t k_nearest_in(const Eigen::Vector3d& q, IndexRange range,
                           std::size_t count, RayHit* out,
                           std::span<const std::size_t> seeds = {}) const {
    if (count == 0 || count > kMaxNeighbours) {
      raise(ErrorCategory::kInvalidArgument, "unsupported neighbour count");
    }
    detail::KBest best(count);
    for (std::size_t key : seeds) {
      if (!range.contains(key)) continue;
      const std::size_t slot = slot_of(key);
      if (slot != kNoSlot) best.offer(chord_sq(points_[slot].ray, q), key);
    }
    search(0, q, range.first, range.last, best);
    for (std::size_t i = 0; i < best.size; ++i) {
      out[i] = {best.key[i], std::sqrt(best.d2[i])};
    }
    return best.size;
  }

  // Storage slot of a key, for repeated cheap access through `ray_at`.
  std::size_t slot(std::size_t key) const { return slot_of(key); }
  const Eigen::Vector3d& ray_at(std::size_t slot) const { return points_[slot].ray; }

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }

  RayHit nearest(const Eigen::Vector3d& q) const {
    Best best;
    search(0, q, 0, std::numeric_limits<std::size_t>::max(), best);
    return {best.key, std::sqrt(best.d2)};
  }

  // Nearest among keys in `range`. `hint` is any key inside the range; its
  // distance seeds the pruning bound without changing the result.
  std::optional<RayHit> nearest_in(const Eigen::Vector3d& q, IndexRange range,
                                   std::optional<std::size_t> hint = {}) const {
    if (points_.empty()) return std::nullopt;
    Best best;
    if (hint && range.contains(*hint)) {
      const std::size_t slot = slot_of(*hint);
      if (slot != kNoSlot) {
        best.d2 = chord_sq(points_[slot].ray, q);
        best.key = *hint;
      }
    }
    search(0, q, range.first, range.last, best);
    if (best.key == kNoKey) return std::nullopt;
    return RayHit{best.key, std::sqrt(best.d2)};
  }

 private:
  static constexpr std::uint32_t kLeafSize = 8;
  static constexpr std::size_t kNoKey = std::numeric_limits<std::size_t>::max();
  static constexpr std::size_t kNoSlot = std::numeric_limits<std::size_t>::max();

  struct Point {
    Eigen::Vector3d ray;
    std::size_t key;
  };

  struct Node {
    Eigen::Vector3d lo, hi;
    std::size_t key_lo, key_hi;
    std::uint32_t begin, end;
    std::int32_t left = -1, right = -1;
  };

  struct Best {
    double d2 = std::numeric_limits<double>::infinity();
    std::size_t key = kNoKey;

    double bound() const { return d2; }

    void offer(double d, std::size_t k) {
      if (d < d2 || (d == d2 && k < key)) {
        d2 = d;
        key = k;
      }
    }
  };

  // Keys are dense in practice, so a flat table maps key -> slot.
  std::size_t slot_of(std::size_t key) const {
    if (slot_by_key_.empty()) return kNoSlot;
    const std::size_t first = points_key_min_;
    if (key < first || key - first >= slot_by_key_.size()) return kNoSlot;
    return slot_by_key_[key - first];
  }

  std::int32_t build(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back({});
    Node node;
    node.begin = begin;
    node.end = end;
    node.lo = points_[begin].ray;
    node.hi = points_[begin].ray;
    node.key_lo = node.key_hi = points_[begin].key;
    for (std::uint32_t i = begin + 1; i < end; ++i) {
      node.lo = node.lo.cwiseMin(points_[i].ray);
      node.hi = node.hi.cwiseMax(points_[i].ray);
      node.key_lo = std::min(node.key_lo, points_[i].key);
      node.key_hi = std::max(node.key_hi, points_[i].key);
    }
    if (end - begin > kLeafSize) {
      const std::uint32_t mid = begin + (end - begin) / 2;
      int axis = 0;
      (node.hi - node.lo).maxCoeff(&axis);
      std::nth_element(points_.begin() + begin, points_.begin() + mid,
                       points_.begin() + end,
                       [axis](const Point& a, const Point& b) {
                         return a.ray[axis] < b.ray[axis] ||
                                (a.ray[axis] == b.ray[axis] && a.key < b.key);
                       });
      node.left = build(begin, mid);
      node.right = build(mid, end);
    }
    nodes_[id] = node;
    return id;
  }

  void index_slots() {
    std::size_t kmin = kNoKey, kmax = 0;
    for (const auto& p : points_) {
      kmin = std::min(kmin, p.key);
      kmax = std::max(kmax, p.key);
    }
    points_key_min_ = kmin;
    slot_by_key_.assign(kmax - kmin + 1, kNoSlot);
    for (std::size_t s = 0; s < points_.size(); ++s) {
      slot_by_key_[points_[s].key - kmin] = s;
    }
  }

  static double box_sq(const Node& n, const Eigen::Vector3d& q) {
    double d2 = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double lo = n.lo[a] - q[a];
      const double hi = q[a] - n.hi[a];
      const double d = std::max({lo, hi, 0.0});
      d2 += d * d;
    }
    return d2;
  }

  template <class Acc>
  void search(std::int32_t id, const Eigen::Vector3d& q, std::size_t key_lo,
              std::size_t key_hi, Acc& best) const {
    const Node& n = nodes_[id];
    if (n.key_hi < key_lo || n.key_lo > key_hi) return;
    if (n.left < 0) {
      for (std::uint32_t i = n.begin; i < n.end; ++i) {
        const Point& p = points_[i];
        if (p.key < key_lo || p.key > key_hi) continue;
        best.offer(chord_sq(p.ray, q), p.key);
      }
      return;
    }
    const double dl = box_sq(nodes_[n.left], q);
    const double dr = box_sq(nodes_[n.right], q);
    const std::int32_t near = dl <= dr ? n.left : n.right;
    const std::int32_t far = dl <= dr ? n.right : n.left;
    const double dnear = std::min(dl, dr);
    const double dfar = std::max(dl, dr);
    if (dnear <= best.bound()) search(near, q, key_lo, key_hi, best);
    if (dfar <= best.bound()) search(far, q, key_lo, key_hi, best);
  }

  std::vector<Point> points_;
  std::vector<Node> nodes_;
  std::vector<std::size_t> slot_by_key_;
  std::size_t points_key_min_ = 0;
};

// Range-restricted nearest neighbour for a query that drifts between calls.
// Keeps the k nearest keys and the distance B to the (k+1)-th from the last
// full search at q0. For a new query at shift s = |q - q0|, every key outside
// the list is at least B - s away, so a listed key closer than that is the
// exact answer and the index is not touched.
class NeighbourCache {
 public:
  static constexpr std::size_t kListed = 4;

  // `Index` is any exact index with k_nearest_in, slot and ray_at.
  template <class Index>
  std::optional<RayHit> nearest(const Index& index, const Eigen::Vector3d& q,
                                IndexRange range) {
    if (count_ > 0) {
      const double shift = std::sqrt(chord_sq(q, q0_));
      // The previous nearest stays nearest while it beats the runner-up's
      // distance at q0, less the shift.
      const double runner_up = count_ > 1 ? dist_[1] : bound_;
      const double d0 = chord_sq(rays_[0], q);
      const double reach0 = runner_up - kMargin - shift;
      if (reach0 > 0.0 && d0 < reach0 * reach0) return RayHit{keys_[0], std::sqrt(d0)};
      double best_d2 = std::numeric_limits<double>::infinity();
      std::size_t best = 0;
      for (std::size_t i = 0; i < count_; ++i) {
        const double d2 = chord_sq(rays_[i], q);
        if (d2 < best_d2 || (d2 == best_d2 && keys_[i] < keys_[best])) {
          best_d2 = d2;
          best = i;
        }
      }
      const double reach = bound_ - kMargin - shift;
      if (reach > 0.0 && best_d2 < reach * reach) return RayHit{keys_[best], std::sqrt(best_d2)};
    }
    RayHit hits[kListed + 1];
    const std::size_t n = index.k_nearest_in(
        q, range, kListed + 1, hits, std::span<const std::size_t>(keys_, count_));
    ++searches_;
    if (n == 0) {
      count_ = 0;
      return std::nullopt;
    }
    q0_ = q;
    count_ = std::min(n, kListed);
    for (std::size_t i = 0; i < count_; ++i) {
      keys_[i] = hits[i].index;
      dist_[i] = hits[i].distance;
      rays_[i] = index.ray_at(index.slot(hits[i].index));
    }
    bound_ = n > kListed ? hits[kListed].distance
                         : std::numeric_limits<double>::infinity();
    return hits[0];
  }

  void reset() { count_ = 0; }
  std::size_t searches() const { return searches_; }

 private:
  // Guards the certificate against rounding in the distances.
  static constexpr double kMargin = 1e-12;

  Eigen::Vector3d q0_ = Eigen::Vector3d::Zero();
  double bound_ = 0.0;
  std::size_t count_ = 0;
  std::size_t keys_[kListed] = {};
  double dist_[kListed] = {};  // distances at q0
  Eigen::Vector3d rays_[kListed];
  std::size_t searches_ = 0;
};

inline RayIndex build_ray_index(std::span<const Eigen::Vector3d> rays) {
  return RayIndex(rays);
}

inline RayHit nearest_ray(const RayIndex& index, const Eigen::Vector3d& q) {
  return index.nearest(q);
}

}  // namespace evstr
