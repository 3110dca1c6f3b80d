#pragma once

#include <cstddef>
#include <ostream>
#include <span>
#include <string>

#include <Eigen/Geometry>

#include "evstr/core/types.hpp"
#include "evstr/io/bench.hpp"
#include "evstr/io/metrics.hpp"
#include "evstr/io/text.hpp"

namespace evstr::io {

namespace detail {

inline void put_quaternion(std::ostream& out, const Rotation& r) {
  const Eigen::Quaterniond q = r.quaternion();
  out << ',' << format_double(q.x()) << ',' << format_double(q.y()) << ','
      << format_double(q.z()) << ',' << format_double(q.w());
}

}  // namespace detail

inline void write_estimates_csv(std::ostream& out, std::span<const BatchEstimate> rows) {
  out << "batch,alpha,beta,solved,wx,wy,wz,qx,qy,qz,qw,matched,selected,residual_rms,"
         "iterations,runtime_ms,error\n";
  for (const BatchEstimate& e : rows) {
    out << e.batch << ',' << format_double(e.alpha) << ',' << format_double(e.beta) << ','
        << (e.solved ? 1 : 0) << ',' << format_double(e.omega.value.x()) << ','
        << format_double(e.omega.value.y()) << ',' << format_double(e.omega.value.z());
    detail::put_quaternion(out, e.r_alpha_beta);
    out << ',' << e.matched << ',' << e.selected << ',' << format_double(e.residual_rms) << ','
        << e.iterations << ',' << format_double(e.runtime_ms) << ',' << e.error << '\n';
  }
}

inline void write_bench_csv(std::ostream& out, std::span<const BenchRow> rows) {
  out << "sequence,batch_size,batch_ms,method,rms_deg_s,rms_window_deg_s,runtime_ms,batches,"
         "failed\n";
  for (const BenchRow& r : rows) {
    out << r.sequence << ',' << r.batch_size << ',' << format_double(r.batch_ms) << ','
        << to_string(r.method) << ',' << format_double(r.rms_deg_s) << ','
        << format_double(r.rms_window_deg_s) << ',' << format_double(r.runtime_ms) << ','
        << r.batches << ',' << r.failed << '\n';
  }
}

// Trajectory rows "t,qx,qy,qz,qw", plus the error column when given.
inline void write_trajectory_csv(std::ostream& out, std::span<const TrajectoryRecord> traj,
                                 const OrientationErrors* errors = nullptr) {
  out << "t,qx,qy,qz,qw" << (errors ? ",error_deg\n" : "\n");
  std::size_t k = 0;
  for (const TrajectoryRecord& r : traj) {
    out << format_double(r.t);
    detail::put_quaternion(out, r.orientation);
    if (errors) {
      if (k < errors->t.size() && errors->t[k] == r.t) {
        out << ',' << format_double(errors->degrees[k++]);
      } else {
        out << ',';
      }
    }
    out << '\n';
  }
}

}  // namespace evstr::io
