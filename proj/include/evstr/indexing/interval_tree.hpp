#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

namespace evstr {

// Static augmented interval tree over closed intervals [low, high]. Intervals
// are kept sorted by (low, key) in a flat array that doubles as an implicit
// balanced BST; every node records the largest `high` in its subtree.
template <typename Key = std::size_t>
class IntervalTree {
 public:
  struct Interval {
    double low;
    double high;
    Key key;
  };

  IntervalTree() = default;

  explicit IntervalTree(std::vector<Interval> intervals)
      : nodes_(std::move(intervals)), max_high_(nodes_.size()) {
    const auto before = [](const Interval& a, const Interval& b) {
      return a.low < b.low || (a.low == b.low && a.key < b.key);
    };
    if (!std::is_sorted(nodes_.begin(), nodes_.end(), before)) {
      std::sort(nodes_.begin(), nodes_.end(), before);
    }
    build(0, nodes_.size());
  }

  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  const Interval& operator[](std::size_t i) const { return nodes_[i]; }

  // Calls visit(interval) for every interval containing x, in (low, key)
  // order.
  template <typename Visit>
  void stab(double x, Visit&& visit) const {
    stab_rec(0, nodes_.size(), x, visit);
  }

  // Position (in sorted order) of the first / last interval containing x and
  // also satisfying `accept`.
  template <typename Accept>
  std::optional<std::size_t> first_stab(double x, Accept&& accept) const {
    return first_rec(0, nodes_.size(), x, accept);
  }

  template <typename Accept>
  std::optional<std::size_t> last_stab(double x, Accept&& accept) const {
    return last_rec(0, nodes_.size(), x, accept);
  }

 private:
  static std::size_t mid_of(std::size_t lo, std::size_t hi) {
    return lo + (hi - lo) / 2;
  }

  double build(std::size_t lo, std::size_t hi) {
    if (lo >= hi) return -std::numeric_limits<double>::infinity();
    const std::size_t mid = mid_of(lo, hi);
    const double m = std::max({nodes_[mid].high, build(lo, mid),
                               build(mid + 1, hi)});
    max_high_[mid] = m;
    return m;
  }

  template <typename Visit>
  void stab_rec(std::size_t lo, std::size_t hi, double x, Visit& visit) const {
    if (lo >= hi) return;
    const std::size_t mid = mid_of(lo, hi);
    if (max_high_[mid] < x) return;
    stab_rec(lo, mid, x, visit);
    if (nodes_[mid].low > x) return;
    if (nodes_[mid].high >= x) visit(nodes_[mid]);
    stab_rec(mid + 1, hi, x, visit);
  }

  template <typename Accept>
  std::optional<std::size_t> first_rec(std::size_t lo, std::size_t hi, double x,
                                       Accept& accept) const {
    if (lo >= hi) return std::nullopt;
    const std::size_t mid = mid_of(lo, hi);
    if (max_high_[mid] < x) return std::nullopt;
    if (auto left = first_rec(lo, mid, x, accept)) return left;
    if (nodes_[mid].low > x) return std::nullopt;
    if (nodes_[mid].high >= x && accept(nodes_[mid])) return mid;
    return first_rec(mid + 1, hi, x, accept);
  }

  template <typename Accept>
  std::optional<std::size_t> last_rec(std::size_t lo, std::size_t hi, double x,
                                      Accept& accept) const {
    if (lo >= hi) return std::nullopt;
    const std::size_t mid = mid_of(lo, hi);
    if (max_high_[mid] < x) return std::nullopt;
    if (nodes_[mid].low <= x) {
      if (auto right = last_rec(mid + 1, hi, x, accept)) return right;
      if (nodes_[mid].high >= x && accept(nodes_[mid])) return mid;
    }
    return last_rec(lo, mid, x, accept);
  }

  std::vector<Interval> nodes_;
  std::vector<double> max_high_;
};

}  // namespace evstr
