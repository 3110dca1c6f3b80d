#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evstr/cm/contrast.hpp"
#include "evstr/core/so3.hpp"
#include "evstr/core/types.hpp"
#include "evstr/error.hpp"
#include "evstr/io/metrics.hpp"
#include "evstr/str/registration.hpp"
#include "evstr/vo/batches.hpp"

namespace evstr::io {

enum class Method { kStr, kCm };

inline std::string_view to_string(Method m) { return m == Method::kStr ? "str" : "cm"; }

inline Method parse_method(std::string_view s) {
  if (s == "str") return Method::kStr;
  if (s == "cm") return Method::kCm;
  raise(ErrorCategory::kInvalidArgument, "unknown method '" + std::string(s) + "'");
}

struct EstimateConfig {
  Method method = Method::kStr;
  std::size_t batch_size = 20000;
  // Cut batches by duration instead of by count.
  std::optional<double> batch_duration;  // seconds
  StrConfig str;
  CmConfig cm;
  // CM starts from the previous batch's estimate; the first from zero.
  bool cm_warm_start = true;
  std::optional<std::size_t> max_batches;
};

struct BatchEstimate {
  std::size_t batch = 0;
  BatchSpan span;
  double alpha = 0.0;
  double beta = 0.0;
  bool solved = false;
  std::string error;
  AngularVelocity omega;
  Rotation r_delta;
  Rotation r_alpha_beta;
  std::size_t matched = 0;    // STR only
  std::size_t selected = 0;   // STR only
  double residual_rms = 0.0;  // STR only: RMS of the selected chords
  int iterations = 0;
  double runtime_ms = 0.0;

  double delta() const { return 0.5 * (beta - alpha); }
};

// Consecutive non-overlapping batches, by count or by duration. Duration
// batches hold the events of [t0 + kD, t0 + (k + 1)D); a trailing partial
// batch is dropped.
inline std::vector<BatchSpan> estimate_spans(std::span<const Event> stream,
                                             const EstimateConfig& cfg) {
  std::vector<BatchSpan> spans;
  if (!cfg.batch_duration) {
    spans = disjoint_batches(stream.size(), cfg.batch_size);
  } else {
    const double d = *cfg.batch_duration;
    if (!(d > 0.0)) raise(ErrorCategory::kInvalidArgument, "batch duration must be positive");
    if (stream.empty()) return spans;
    const double t0 = stream.front().t;
    std::size_t begin = 0;
    for (std::size_t k = 1;; ++k) {
      const double edge = t0 + static_cast<double>(k) * d;
      if (edge > stream.back().t) break;
      std::size_t end = begin;
      while (end < stream.size() && stream[end].t < edge) ++end;
      if (end - begin >= 2) spans.push_back({begin, end});
      begin = end;
    }
  }
  if (cfg.max_batches && spans.size() > *cfg.max_batches) spans.resize(*cfg.max_batches);
  return spans;
}

// Per-batch velocity estimates. Failed batches are reported, not thrown.
inline std::vector<BatchEstimate> estimate_batches(std::span<const Event> stream,
                                                   const CameraIntrinsics& intr,
                                                   const EstimateConfig& cfg) {
  std::vector<BatchEstimate> out;
  std::optional<AngularVelocity> previous;
  const std::vector<BatchSpan> spans = estimate_spans(stream, cfg);
  for (std::size_t b = 0; b < spans.size(); ++b) {
    BatchEstimate e;
    e.batch = b;
    e.span = spans[b];
    e.alpha = stream[spans[b].begin].t;
    e.beta = stream[spans[b].end - 1].t;
    try {
      const EventBatch batch = make_batch(stream, spans[b]);
      const auto started = std::chrono::steady_clock::now();
      if (cfg.method == Method::kStr) {
        const StrResult r = str_solve(batch, intr, cfg.str);
        e.runtime_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - started)
                           .count();
        e.omega = r.omega;
        e.r_delta = r.r_delta;
        e.r_alpha_beta = r.r_alpha_beta;
        e.matched = r.matched;
        e.selected = r.correspondences.size();
        if (e.selected > 0 && !r.objective_history.empty()) {
          e.residual_rms = std::sqrt(r.objective_history.back() / static_cast<double>(e.selected));
        }
        e.iterations = r.iterations;
      } else {
        const AngularVelocity start =
            cfg.cm_warm_start && previous ? *previous : AngularVelocity();
        const CmResult r = cm_solve(batch, intr, start, cfg.cm);
        e.runtime_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - started)
                           .count();
        e.omega = r.omega;
        e.r_delta = relative_rotation(r.omega, e.delta());
        e.r_alpha_beta = relative_rotation(r.omega, e.beta - e.alpha);
        e.iterations = r.iterations;
      }
      e.solved = true;
      previous = e.omega;
    } catch (const Error& err) {
      e.error = std::string(evstr::to_string(err.category())) + ": " + err.what();
      previous.reset();
    }
    out.push_back(std::move(e));
  }
  return out;
}

struct BenchRow {
  std::string sequence;
  std::size_t batch_size = 0;
  Method method = Method::kStr;
  double batch_ms = 0.0;          // mean batch duration
  double rms_deg_s = 0.0;         // angular error divided by Delta
  double rms_window_deg_s = 0.0;  // angular error divided by beta - alpha
  double runtime_ms = 0.0;        // mean per solved batch
  std::size_t batches = 0;        // evaluated against ground truth
  std::size_t failed = 0;
};

struct BenchConfig {
  std::vector<std::size_t> batch_sizes{10000, 15000, 20000, 25000, 30000};
  std::vector<Method> methods{Method::kStr, Method::kCm};
  StrConfig str;
  CmConfig cm;
  std::optional<std::size_t> max_batches;
};

// One row per (batch size, method), in that order. Batches whose window
// leaves the ground-truth span are not evaluated.
inline std::vector<BenchRow> run_bench(const std::string& sequence, std::span<const Event> stream,
                                       const CameraIntrinsics& intr,
                                       std::span<const TrajectoryRecord> gt,
                                       const BenchConfig& cfg) {
  if (gt.empty()) raise(ErrorCategory::kInsufficientData, "bench needs ground truth");
  std::vector<BenchRow> rows;
  for (std::size_t n : cfg.batch_sizes) {
    if (n == 0) raise(ErrorCategory::kInvalidArgument, "batch sizes must be positive");
    for (Method m : cfg.methods) {
      EstimateConfig ec;
      ec.method = m;
      ec.batch_size = n;
      ec.str = cfg.str;
      ec.cm = cfg.cm;
      ec.max_batches = cfg.max_batches;
      BenchRow row;
      row.sequence = sequence;
      row.batch_size = n;
      row.method = m;
      std::vector<Rotation> est, truth;
      std::vector<double> half, full;
      double duration = 0.0, runtime = 0.0;
      std::size_t solved = 0;
      for (const BatchEstimate& e : estimate_batches(stream, intr, ec)) {
        if (!e.solved) {
          ++row.failed;
          continue;
        }
        ++solved;
        runtime += e.runtime_ms;
        duration += (e.beta - e.alpha) * 1e3;
        if (!(e.alpha >= gt.front().t && e.beta <= gt.back().t) || !(e.beta > e.alpha)) continue;
        est.push_back(e.r_delta);
        truth.push_back(gt_half_window_rotation(gt, e.alpha, e.beta));
        half.push_back(e.delta());
        full.push_back(e.beta - e.alpha);
      }
      row.batches = est.size();
      if (solved > 0) {
        row.batch_ms = duration / static_cast<double>(solved);
        row.runtime_ms = runtime / static_cast<double>(solved);
      }
      if (!est.empty()) {
        row.rms_deg_s = rms_velocity_error(est, truth, half);
        row.rms_window_deg_s = rms_velocity_error(est, truth, full);
      } else {
        row.rms_deg_s = row.rms_window_deg_s = std::nan("");
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace evstr::io
