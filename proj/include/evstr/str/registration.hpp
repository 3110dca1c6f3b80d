#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SVD>

#include "evstr/core/camera.hpp"
#include "evstr/core/so3.hpp"
#include "evstr/core/types.hpp"
#include "evstr/error.hpp"
#include "evstr/indexing/interval_index.hpp"
#include "evstr/indexing/ray_grid.hpp"
#include "evstr/indexing/ray_index.hpp"

namespace evstr {

inline constexpr double kUnmatched = std::numeric_limits<double>::infinity();
inline constexpr std::size_t kNoMatch = std::numeric_limits<std::size_t>::max();

struct Correspondence {
  std::size_t j = 0;        // event in the first half
  std::size_t n_j = 0;      // matched event in the second half
  double residual = 0.0;    // chord distance, in [0, 2]
};

struct StrConfig {
  // eps_T = eps_fraction * (beta - alpha) unless eps_t is given.
  double eps_fraction = 0.02;
  std::optional<double> eps_t;
  // K = floor(trim_fraction * matched) unless trim_count is given.
  double trim_fraction = 0.8;
  std::optional<std::size_t> trim_count;
  int max_iterations = 30;
  double tolerance = 1e-6;  // rad, geodesic step between iterates
  bool match_polarity = false;
  // Alternative start. The solve begins from whichever of the identity and
  // this rotation has the lower trimmed objective.
  std::optional<Rotation> initial;

  void validate() const {
    if (!(trim_fraction > 0.0 && trim_fraction <= 1.0)) {
      raise(ErrorCategory::kInvalidArgument, "trim fraction must be in (0, 1]");
    }
    if (eps_t && !(*eps_t > 0.0)) {
      raise(ErrorCategory::kInvalidArgument, "eps_T must be positive");
    }
    if (!(eps_fraction > 0.0)) {
      raise(ErrorCategory::kInvalidArgument, "eps_T fraction must be positive");
    }
    if (max_iterations < 1) {
      raise(ErrorCategory::kInvalidArgument, "need at least one iteration");
    }
  }
};

struct VelocityEstimate {
  Eigen::Vector3d rotvec = Eigen::Vector3d::Zero();  // log(R_delta)
  AngularVelocity omega;
  Rotation r_alpha_beta;
};

struct StrResult {
  Rotation r_delta;
  Eigen::Vector3d rotvec = Eigen::Vector3d::Zero();
  AngularVelocity omega;
  Rotation r_alpha_beta;
  // K selected correspondences, ascending residual.
  std::vector<Correspondence> correspondences;
  int iterations = 0;
  bool converged = false;
  // Fewer matched events than the requested trim count.
  bool degraded = false;
  std::size_t matched = 0;
  std::size_t split_index = 0;
  // Full kd-tree searches; the rest were answered from neighbour caches.
  std::size_t tree_searches = 0;
  double alpha = 0.0;
  double beta = 0.0;
  // Trimmed sum of squared residuals after each correspondence assignment;
  // the last entry is evaluated at the returned rotation.
  std::vector<double> objective_history;
};

struct SplitIndices {
  std::size_t m = 0;  // I_alpha = [0, m)
  std::size_t n = 0;  // I_beta = [m, n)
};

inline SplitIndices split_times(std::span<const double> times, double alpha,
                                double beta) {
  const double mid = alpha + 0.5 * (beta - alpha);
  const auto m = static_cast<std::size_t>(
      std::upper_bound(times.begin(), times.end(), mid) - times.begin());
  if (m == 0 || m == times.size()) {
    raise(ErrorCategory::kInsufficientData,
          "one half of the batch is empty (M = " + std::to_string(m) +
              ", N = " + std::to_string(times.size()) + ")");
  }
  return {m, times.size()};
}

inline SplitIndices split(const EventBatch& batch) {
  if (batch.empty()) {
    raise(ErrorCategory::kInsufficientData, "empty batch");
  }
  const std::vector<double> ts = batch.timestamps();
  return split_times(ts, batch.alpha(), batch.beta());
}

// Residual of a first-half ray under `r_delta` against its temporal
// neighbours; nullopt when L_j is empty.
inline std::optional<RayHit> event_residual(const Rotation& r_delta,
                                            const Eigen::Vector3d& ray_j,
                                            const RayIndex& index,
                                            std::optional<IndexRange> l_j,
                                            std::optional<std::size_t> hint = {}) {
  if (!l_j) return std::nullopt;
  return index.nearest_in(r_delta * ray_j, *l_j, hint);
}

struct TrimmedSelection {
  std::vector<std::size_t> indices;
  bool degraded = false;
};

// Indices of the K smallest finite residuals, ties by index. Unmatched
// entries carry kUnmatched and are never selected. The selected set does not
// depend on `sorted`; unsorted indices come in ascending index order.
inline TrimmedSelection trimmed_selection(std::span<const double> residuals,
                                          std::size_t k, bool sorted = true) {
  std::vector<double> finite;
  finite.reserve(residuals.size());
  for (double r : residuals) {
    if (std::isfinite(r)) finite.push_back(r);
  }
  TrimmedSelection out;
  if (k > finite.size()) {
    out.degraded = true;
    k = finite.size();
  }
  if (k == 0) return out;
  // K-th smallest value; entries equal to it are taken in index order.
  std::nth_element(finite.begin(), finite.begin() + (k - 1), finite.end());
  const double threshold = finite[k - 1];
  std::size_t below = 0;
  for (std::size_t i = 0; i < k - 1; ++i) below += finite[i] < threshold;
  std::size_t ties = k - below;
  out.indices.reserve(k);
  for (std::size_t i = 0; i < residuals.size() && out.indices.size() < k; ++i) {
    const double r = residuals[i];
    if (r < threshold || (r == threshold && ties > 0 && ties--)) out.indices.push_back(i);
  }
  if (sorted) {
    std::sort(out.indices.begin(), out.indices.end(), [&](std::size_t a, std::size_t b) {
      return residuals[a] < residuals[b] || (residuals[a] == residuals[b] && a < b);
    });
  }
  return out;
}

// Rotation R minimising sum ||b_i - R a_i||^2 given B = sum b_i a_i^T.
inline Rotation wahba_from_covariance(const Eigen::Matrix3d& b) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      b, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d s = svd.singularValues();
  if (!b.allFinite() || !(s(1) > 1e-12 * std::max(s(0), 1e-300))) {
    raise(ErrorCategory::kDegenerateGeometry,
          "rank-deficient cross-covariance (collinear rays)");
  }
  const Eigen::Matrix3d& u = svd.matrixU();
  const Eigen::Matrix3d& v = svd.matrixV();
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (u * v.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return Rotation::project(u * d * v.transpose());
}

inline Rotation wahba_update(std::span<const Eigen::Vector3d> source,
                             std::span<const Eigen::Vector3d> target) {
  if (source.size() != target.size()) {
    raise(ErrorCategory::kLengthMismatch, "pair lists differ in length");
  }
  if (source.size() < 2) {
    raise(ErrorCategory::kDegenerateGeometry, "Wahba needs at least two pairs");
  }
  Eigen::Matrix3d b = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < source.size(); ++i) {
    b.noalias() += target[i] * source[i].transpose();
  }
  return wahba_from_covariance(b);
}

inline VelocityEstimate recover_velocity(const Rotation& r_delta, double alpha,
                                         double beta) {
  if (!(beta > alpha)) {
    raise(ErrorCategory::kInvalidArgument, "window must have beta > alpha");
  }
  VelocityEstimate out;
  out.rotvec = log_so3(r_delta);
  out.omega = AngularVelocity(out.rotvec * (2.0 / (beta - alpha)));
  out.r_alpha_beta = r_delta * r_delta;
  return out;
}

// Batch given as parallel arrays of time-sorted timestamps and unit rays.
struct StrInput {
  std::span<const double> times;
  std::span<const Eigen::Vector3d> rays;
  std::span<const int> polarities;  // may be empty unless matching polarity
  double alpha = 0.0;
  double beta = 0.0;
};

namespace detail {

// Second-half search structure: one grid, or one per polarity. Cells are
// sized so a query's key range holds about kValidPerCell rays per cell.
class BetaIndex {
 public:
  static constexpr double kValidPerCell = 2.0;

  BetaIndex(const StrInput& in, SplitIndices s, bool by_polarity, double mean_range)
      : by_polarity_(by_polarity) {
    const std::size_t count = s.n - s.m;
    const double per_cell =
        std::max(1.0, kValidPerCell * static_cast<double>(count) / std::max(mean_range, 1.0));
    if (!by_polarity) {
      all_ = RayGrid(in.rays.subspan(s.m, count), s.m, per_cell);
      return;
    }
    for (int sign : {-1, 1}) {
      std::vector<Eigen::Vector3d> rays;
      std::vector<std::size_t> keys;
      for (std::size_t k = s.m; k < s.n; ++k) {
        if (in.polarities[k] == sign) {
          rays.push_back(in.rays[k]);
          keys.push_back(k);
        }
      }
      if (!rays.empty()) {
        (sign < 0 ? neg_ : pos_) = RayGrid(rays, keys, per_cell);
      }
    }
  }

  const RayGrid* for_polarity(int p) const {
    if (!by_polarity_) return &all_;
    const RayGrid& idx = p < 0 ? neg_ : pos_;
    return idx.empty() ? nullptr : &idx;
  }

 private:
  bool by_polarity_;
  RayGrid all_, neg_, pos_;
};

}  // namespace detail

// Trimmed spatiotemporal registration: alternates nearest-neighbour
// assignment within temporal neighbourhoods and a Wahba update on the K best
// pairs, starting from the identity.
inline StrResult str_solve(const StrInput& in, const StrConfig& cfg) {
  cfg.validate();
  if (in.times.size() != in.rays.size()) {
    raise(ErrorCategory::kLengthMismatch, "times and rays differ in length");
  }
  if (cfg.match_polarity && in.polarities.size() != in.times.size()) {
    raise(ErrorCategory::kInvalidArgument, "polarity matching needs polarities");
  }
  if (!(in.beta > in.alpha)) {
    raise(ErrorCategory::kInsufficientData, "batch window has zero length");
  }
  const SplitIndices s = split_times(in.times, in.alpha, in.beta);
  const double delta = 0.5 * (in.beta - in.alpha);
  const double eps = cfg.eps_t ? *cfg.eps_t : cfg.eps_fraction * (in.beta - in.alpha);

  const IntervalIndex temporal(in.times.subspan(s.m), s.m, delta, eps);
  std::vector<std::size_t> active;
  std::vector<IndexRange> ranges;
  active.reserve(s.m);
  ranges.reserve(s.m);
  const auto found = temporal.query_ranges(in.times.first(s.m));
  for (std::size_t j = 0; j < s.m; ++j) {
    if (found[j]) {
      active.push_back(j);
      ranges.push_back(*found[j]);
    }
  }
  double mean_range = 0.0;
  for (const IndexRange& r : ranges) mean_range += static_cast<double>(r.size());
  if (!ranges.empty()) mean_range /= static_cast<double>(ranges.size());
  const detail::BetaIndex spatial(in, s, cfg.match_polarity, mean_range);

  const std::size_t count = active.size();
  std::vector<std::size_t> nn(count, kNoMatch);
  std::vector<double> residuals(count, kUnmatched);

  std::vector<NeighbourCache> caches(count);
  auto assign = [&](const Rotation& r) {
    std::size_t matched = 0;
    for (std::size_t a = 0; a < count; ++a) {
      const std::size_t j = active[a];
      const RayGrid* index =
          spatial.for_polarity(cfg.match_polarity ? in.polarities[j] : 1);
      std::optional<RayHit> hit;
      if (index) hit = caches[a].nearest(*index, r * in.rays[j], ranges[a]);
      if (hit) {
        nn[a] = hit->index;
        residuals[a] = hit->distance;
        ++matched;
      } else {
        nn[a] = kNoMatch;
        residuals[a] = kUnmatched;
      }
    }
    return matched;
  };

  StrResult result;
  result.split_index = s.m;
  result.alpha = in.alpha;
  result.beta = in.beta;

  Rotation r = Rotation::identity();
  std::size_t matched = assign(r);
  if (matched < 2) {
    raise(ErrorCategory::kInsufficientData,
          "fewer than two events have temporal neighbours");
  }
  std::size_t k = cfg.trim_count
                      ? *cfg.trim_count
                      : static_cast<std::size_t>(
                            std::floor(cfg.trim_fraction * static_cast<double>(matched)));
  k = std::max<std::size_t>(k, 2);
  result.matched = matched;

  auto objective = [&](const TrimmedSelection& sel) {
    double sum = 0.0;
    for (std::size_t a : sel.indices) sum += residuals[a] * residuals[a];
    return sum;
  };

  TrimmedSelection sel = trimmed_selection(residuals, k, false);
  if (cfg.initial) {
    const double at_identity = objective(sel);
    assign(*cfg.initial);
    TrimmedSelection alt = trimmed_selection(residuals, k, false);
    if (objective(alt) < at_identity) {
      r = *cfg.initial;
      sel = std::move(alt);
    } else {
      assign(r);
      sel = trimmed_selection(residuals, k, false);
    }
  }
  result.degraded = sel.degraded;
  for (int it = 0; it < cfg.max_iterations; ++it) {
    result.objective_history.push_back(objective(sel));
    Eigen::Matrix3d b = Eigen::Matrix3d::Zero();
    for (std::size_t a : sel.indices) {
      b.noalias() += in.rays[nn[a]] * in.rays[active[a]].transpose();
    }
    const Rotation next = wahba_from_covariance(b);
    const double step = geodesic_distance(next, r);
    r = next;
    result.iterations = it + 1;
    assign(r);
    sel = trimmed_selection(residuals, k, false);
    if (step < cfg.tolerance) {
      result.converged = true;
      break;
    }
  }
  result.objective_history.push_back(objective(sel));
  sel = trimmed_selection(residuals, k);
  for (const NeighbourCache& c : caches) result.tree_searches += c.searches();

  result.correspondences.reserve(sel.indices.size());
  for (std::size_t a : sel.indices) {
    result.correspondences.push_back({active[a], nn[a], residuals[a]});
  }
  result.r_delta = r;
  const VelocityEstimate v = recover_velocity(r, in.alpha, in.beta);
  result.rotvec = v.rotvec;
  result.omega = v.omega;
  result.r_alpha_beta = v.r_alpha_beta;
  return result;
}

inline StrResult str_solve(const EventBatch& batch, const CameraIntrinsics& intr,
                           const StrConfig& cfg = {}) {
  if (batch.empty()) raise(ErrorCategory::kInsufficientData, "empty batch");
  const std::vector<double> times = batch.timestamps();
  const std::vector<Eigen::Vector3d> rays = event_rays(batch.events(), intr);
  std::vector<int> pol(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) pol[i] = batch.events()[i].p;
  return str_solve(StrInput{times, rays, pol, batch.alpha(), batch.beta()}, cfg);
}

}  // namespace evstr
