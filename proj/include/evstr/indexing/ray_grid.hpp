#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "evstr/error.hpp"
#include "evstr/indexing/interval_index.hpp"
#include "evstr/indexing/ray_index.hpp"

namespace evstr {

// Exact range-restricted nearest neighbours over unit rays, bucketed on a
// planar grid. Rays are projected orthographically onto the plane normal to
// their mean direction; projection never lengthens a chord, so the distance
// to a cell's rectangle bounds the distance to every ray in it. Each cell
// lists its keys ascending, so a key range costs two binary searches.
// Answers match RayIndex exactly, ties included.
class RayGrid {
 public:
  RayGrid() = default;

  // Keys must be strictly ascending. `per_cell` is the mean number of rays
  // per cell if they filled their bounding rectangle uniformly.
  RayGrid(std::span<const Eigen::Vector3d> rays, std::span<const std::size_t> keys,
          double per_cell) {
    if (rays.empty() || rays.size() != keys.size()) {
      raise(ErrorCategory::kInvalidArgument,
            "ray grid needs at least one ray and one key per ray");
    }
    if (!(per_cell > 0.0)) raise(ErrorCategory::kInvalidArgument, "cell occupancy must be positive");
    for (std::size_t i = 1; i < keys.size(); ++i) {
      if (keys[i] <= keys[i - 1]) raise(ErrorCategory::kInvalidArgument, "keys must ascend");
    }
    build(rays, keys, per_cell);
  }

  RayGrid(std::span<const Eigen::Vector3d> rays, std::size_t first_key, double per_cell) {
    if (rays.empty()) raise(ErrorCategory::kInvalidArgument, "ray grid needs at least one ray");
    if (!(per_cell > 0.0)) raise(ErrorCategory::kInvalidArgument, "cell occupancy must be positive");
    std::vector<std::size_t> keys(rays.size());
    for (std::size_t i = 0; i < keys.size(); ++i) keys[i] = first_key + i;
    build(rays, keys, per_cell);
  }

  // Same contract as RayIndex::k_nearest_in.
  std::size_t k_nearest_in(const Eigen::Vector3d& q, IndexRange range, std::size_t count,
                           RayHit* out, std::span<const std::size_t> seeds = {}) const {
    if (count == 0 || count > detail::kMaxNeighbours) {
      raise(ErrorCategory::kInvalidArgument, "unsupported neighbour count");
    }
    detail::KBest best(count);
    for (std::size_t key : seeds) {
      if (!range.contains(key)) continue;
      const std::size_t s = slot(key);
      if (s != kNoSlot) best.offer(chord_sq(rays_[s], q), key);
    }
    if (!keys_.empty() && range.first <= keys_max_ && range.last >= keys_min_) {
      search(q, range, best);
    }
    for (std::size_t i = 0; i < best.size; ++i) out[i] = {best.key[i], std::sqrt(best.d2[i])};
    return best.size;
  }

  std::size_t slot(std::size_t key) const {
    if (key < keys_min_ || key - keys_min_ >= slot_by_key_.size()) return kNoSlot;
    return slot_by_key_[key - keys_min_];
  }
  const Eigen::Vector3d& ray_at(std::size_t slot) const { return rays_[slot]; }

  std::size_t size() const { return keys_.size(); }
  bool empty() const { return keys_.empty(); }
  std::size_t cells() const { return static_cast<std::size_t>(nx_) * ny_; }

 private:
  static constexpr std::size_t kNoSlot = std::numeric_limits<std::size_t>::max();
  // Absorbs rounding in the projected lower bounds.
  static constexpr double kSlack = 1e-12;

  void build(std::span<const Eigen::Vector3d> rays, std::span<const std::size_t> keys,
             double per_cell) {
    Eigen::Vector3d c = Eigen::Vector3d::Zero();
    for (const auto& r : rays) c += r;
    c = c.norm() > 1e-9 ? Eigen::Vector3d(c.normalized()) : Eigen::Vector3d::UnitZ();
    const Eigen::Vector3d other =
        std::abs(c.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
    e1_ = c.cross(other).normalized();
    e2_ = c.cross(e1_);

    std::vector<double> px(rays.size()), py(rays.size());
    double x1 = -std::numeric_limits<double>::infinity(), y1 = x1;
    x0_ = y0_ = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < rays.size(); ++i) {
      px[i] = rays[i].dot(e1_);
      py[i] = rays[i].dot(e2_);
      x0_ = std::min(x0_, px[i]);
      y0_ = std::min(y0_, py[i]);
      x1 = std::max(x1, px[i]);
      y1 = std::max(y1, py[i]);
    }
    const double wx = std::max(x1 - x0_, 1e-9);
    const double wy = std::max(y1 - y0_, 1e-9);
    h_ = std::sqrt(per_cell * wx * wy / static_cast<double>(rays.size()));
    h_ = std::max({h_, wx / 4096.0, wy / 4096.0});
    inv_h_ = 1.0 / h_;
    nx_ = static_cast<long>(std::floor(wx * inv_h_)) + 1;
    ny_ = static_cast<long>(std::floor(wy * inv_h_)) + 1;

    // Counting sort by cell; stable, so keys stay ascending within a cell.
    std::vector<std::uint32_t> cell(rays.size());
    start_.assign(static_cast<std::size_t>(nx_ * ny_) + 1, 0);
    for (std::size_t i = 0; i < rays.size(); ++i) {
      const long x = std::clamp(static_cast<long>((px[i] - x0_) * inv_h_), 0L, nx_ - 1);
      const long y = std::clamp(static_cast<long>((py[i] - y0_) * inv_h_), 0L, ny_ - 1);
      cell[i] = static_cast<std::uint32_t>(y * nx_ + x);
      ++start_[cell[i] + 1];
    }
    for (std::size_t i = 1; i < start_.size(); ++i) start_[i] += start_[i - 1];
    std::vector<std::uint32_t> fill(start_.begin(), start_.end() - 1);
    keys_.resize(rays.size());
    rays_.resize(rays.size());
    for (std::size_t i = 0; i < rays.size(); ++i) {
      const std::uint32_t s = fill[cell[i]]++;
      keys_[s] = keys[i];
      rays_[s] = rays[i];
    }
    keys_min_ = *std::min_element(keys.begin(), keys.end());
    keys_max_ = *std::max_element(keys.begin(), keys.end());
    slot_by_key_.assign(keys_max_ - keys_min_ + 1, kNoSlot);
    for (std::size_t s = 0; s < keys_.size(); ++s) slot_by_key_[keys_[s] - keys_min_] = s;
  }

  void scan(long x, long y, double px, double py, const Eigen::Vector3d& q, IndexRange range,
            detail::KBest& best) const {
    const double lx = x0_ + static_cast<double>(x) * h_;
    const double ly = y0_ + static_cast<double>(y) * h_;
    const double dx = std::max({lx - px, px - (lx + h_), 0.0});
    const double dy = std::max({ly - py, py - (ly + h_), 0.0});
    if (dx * dx + dy * dy > best.bound() + kSlack) return;
    const std::size_t id = static_cast<std::size_t>(y * nx_ + x);
    const auto first = keys_.begin() + start_[id];
    const auto last = keys_.begin() + start_[id + 1];
    for (auto it = std::lower_bound(first, last, range.first); it != last && *it <= range.last;
         ++it) {
      const std::size_t s = static_cast<std::size_t>(it - keys_.begin());
      best.offer(chord_sq(rays_[s], q), *it);
    }
  }

  void search(const Eigen::Vector3d& q, IndexRange range, detail::KBest& best) const {
    const double px = q.dot(e1_);
    const double py = q.dot(e2_);
    const double fx = (px - x0_) * inv_h_;
    const double fy = (py - y0_) * inv_h_;
    const long cx = static_cast<long>(std::floor(fx));
    const long cy = static_cast<long>(std::floor(fy));
    // Distance from q to the edges of its own cell, in projected units.
    const double margin =
        std::min({fx - static_cast<double>(cx), static_cast<double>(cx + 1) - fx,
                  fy - static_cast<double>(cy), static_cast<double>(cy + 1) - fy}) *
        h_;
    // First ring that reaches the grid.
    const long s0 = std::max({0L, -cx, cx - (nx_ - 1), -cy, cy - (ny_ - 1)});
    for (long s = s0;; ++s) {
      if (s > 0) {
        const double lb = std::max(static_cast<double>(s - 1) * h_ + margin, 0.0);
        if (lb * lb > best.bound() + kSlack) break;
      }
      const long xa = std::max(cx - s, 0L), xb = std::min(cx + s, nx_ - 1);
      if (s == 0) {
        scan(cx, cy, px, py, q, range, best);
      } else {
        if (cy - s >= 0) {
          for (long x = xa; x <= xb; ++x) scan(x, cy - s, px, py, q, range, best);
        }
        if (cy + s < ny_) {
          for (long x = xa; x <= xb; ++x) scan(x, cy + s, px, py, q, range, best);
        }
        const long ra = std::max(cy - s + 1, 0L), rb = std::min(cy + s - 1, ny_ - 1);
        if (cx - s >= 0) {
          for (long y = ra; y <= rb; ++y) scan(cx - s, y, px, py, q, range, best);
        }
        if (cx + s < nx_) {
          for (long y = ra; y <= rb; ++y) scan(cx + s, y, px, py, q, range, best);
        }
      }
      if (cx - s <= 0 && cx + s >= nx_ - 1 && cy - s <= 0 && cy + s >= ny_ - 1) break;
    }
  }

  Eigen::Vector3d e1_ = Eigen::Vector3d::UnitX();
  Eigen::Vector3d e2_ = Eigen::Vector3d::UnitY();
  double x0_ = 0.0, y0_ = 0.0, h_ = 1.0, inv_h_ = 1.0;
  long nx_ = 0, ny_ = 0;
  std::vector<std::uint32_t> start_;
  std::vector<std::size_t> keys_;
  std::vector<Eigen::Vector3d> rays_;
  std::vector<std::size_t> slot_by_key_;
  std::size_t keys_min_ = 0, keys_max_ = 0;
};

}  // namespace evstr
