#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "evstr/core/types.hpp"
#include "evstr/indexing/interval_tree.hpp"

namespace evstr {

// Inclusive range of event indices.
struct IndexRange {
  std::size_t first = 0;
  std::size_t last = 0;

  std::size_t size() const { return last - first + 1; }
  bool contains(std::size_t i) const { return i >= first && i <= last; }
  bool operator==(const IndexRange&) const = default;
};

// Temporal neighbourhood search over the second half of a batch. Each event k
// contributes the interval [t_k - eps - delta, t_k + eps - delta]; stabbing it
// at t_j yields { k : |t_k - t_j - delta| <= eps }.
class IntervalIndex {
 public:
  IntervalIndex() = default;

  // `times[i]` is the timestamp of event `first_index + i`.
  IntervalIndex(std::span<const double> times, std::size_t first_index,
                double delta, double eps)
      : times_(times.begin(), times.end()), first_index_(first_index),
        delta_(delta), eps_(eps) {
    if (!(eps > 0.0)) {
      raise(ErrorCategory::kInvalidArgument, "temporal threshold must be positive");
    }
    std::vector<IntervalTree<std::size_t>::Interval> intervals;
    intervals.reserve(times_.size());
    for (std::size_t i = 0; i < times_.size(); ++i) {
      // Pad by a few ulps of the operands; the exact predicate below decides.
      const double pad =
          1e-12 * (1.0 + std::abs(times_[i]) + std::abs(delta) + eps);
      intervals.push_back({times_[i] - eps - delta - pad,
                           times_[i] + eps - delta + pad, first_index + i});
    }
    tree_ = IntervalTree<std::size_t>(std::move(intervals));
  }

  bool empty() const { return times_.empty(); }
  std::size_t size() const { return times_.size(); }
  double delta() const { return delta_; }
  double eps() const { return eps_; }

  bool is_neighbour(std::size_t key, double t_j) const {
    return std::abs(times_[key - first_index_] - t_j - delta_) <= eps_;
  }

  // L_j, in ascending index order.
  std::vector<std::size_t> query(double t_j) const {
    std::vector<std::size_t> out;
    tree_.stab(t_j, [&](const auto& iv) {
      if (is_neighbour(iv.key, t_j)) out.push_back(iv.key);
    });
    return out;
  }

  // query_range for each of a non-decreasing sequence of query times, by a
  // single sweep over the sorted timestamps.
  std::vector<std::optional<IndexRange>> query_ranges(std::span<const double> t) const {
    std::vector<std::optional<IndexRange>> out(t.size());
    for (std::size_t i = 1; i < times_.size(); ++i) {
      if (times_[i] < times_[i - 1]) {
        raise(ErrorCategory::kOrdering, "indexed time stamps must be non-decreasing");
      }
    }
    // Same arithmetic as is_neighbour, split into its two one-sided tests.
    std::size_t lo = 0, hi = 0;
    for (std::size_t j = 0; j < t.size(); ++j) {
      if (j > 0 && t[j] < t[j - 1]) {
        raise(ErrorCategory::kOrdering, "query times must be non-decreasing");
      }
      while (lo < times_.size() && times_[lo] - t[j] - delta_ < -eps_) ++lo;
      hi = std::max(hi, lo);
      while (hi < times_.size() && times_[hi] - t[j] - delta_ <= eps_) ++hi;
      if (lo < hi) out[j] = IndexRange{first_index_ + lo, first_index_ + hi - 1};
    }
    return out;
  }

  // Bounds of L_j. Timestamps are sorted, so L_j is a contiguous index range.
  std::optional<IndexRange> query_range(double t_j) const {
    auto accept = [&](const auto& iv) { return is_neighbour(iv.key, t_j); };
    const auto first = tree_.first_stab(t_j, accept);
    if (!first) return std::nullopt;
    const auto last = tree_.last_stab(t_j, accept);
    return IndexRange{tree_[*first].key, tree_[*last].key};
  }

 private:
  std::vector<double> times_;
  std::size_t first_index_ = 0;
  double delta_ = 0.0;
  double eps_ = 1.0;
  IntervalTree<std::size_t> tree_;
};

// Index over I_beta = {M, ..., N-1} of `batch` (0-based).
inline IntervalIndex build_interval_index(const EventBatch& batch, double eps) {
  const std::vector<double> ts = batch.timestamps();
  const std::size_t m = batch.split_index();
  return IntervalIndex(std::span<const double>(ts).subspan(m), m,
                       batch.half_window(), eps);
}

inline std::vector<std::size_t> temporal_neighbours(const IntervalIndex& index,
                                                    double t_j) {
  return index.query(t_j);
}

}  // namespace evstr
