#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "evstr/core/so3.hpp"
#include "evstr/error.hpp"

namespace evstr {

// Relative rotation between nodes: r_uv = R_v * R_u^T, so rays seen by node
// u map to node v as u_v = r_uv * u_u.
struct RelativeEdge {
  std::size_t u = 0;
  std::size_t v = 0;
  Rotation r_uv;
  double weight = 1.0;
};

struct AveragingConfig {
  double huber_scale = 0.05;  // rad
  int max_iterations = 50;
  double tolerance = 1e-8;    // rad, largest node update

  void validate() const {
    if (!(huber_scale > 0.0) || max_iterations < 1 || !(tolerance > 0.0)) {
      raise(ErrorCategory::kInvalidArgument, "bad rotation-averaging settings");
    }
  }
};

struct AveragingResult {
  std::vector<Rotation> orientations;
  int iterations = 0;
  bool converged = false;
  std::size_t components = 0;
  // Set when some nodes are not connected to the anchor.
  bool disconnected = false;
  std::vector<std::string> warnings;
};

namespace detail {

inline double huber_weight(double r, double scale) {
  return r <= scale ? 1.0 : scale / r;
}

}  // namespace detail

// Robust rotation averaging by iteratively reweighted Gauss-Newton with a
// Huber loss on geodesic residuals. Node 0 is fixed to `anchor`. Nodes that
// cannot reach node 0 are averaged per component, each component pinned at
// its lowest node to `fallback` (identity when no fallback is given).
inline AveragingResult rotation_averaging(std::size_t n, std::span<const RelativeEdge> edges,
                                          const Rotation& anchor,
                                          const AveragingConfig& cfg = {},
                                          std::span<const Rotation> fallback = {}) {
  cfg.validate();
  if (n == 0) raise(ErrorCategory::kInvalidArgument, "rotation averaging needs a node");
  if (!fallback.empty() && fallback.size() != n) {
    raise(ErrorCategory::kLengthMismatch, "fallback orientations do not match nodes");
  }
  std::vector<std::vector<std::size_t>> adj(n);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const RelativeEdge& edge = edges[e];
    if (edge.u >= n || edge.v >= n || edge.u == edge.v) {
      raise(ErrorCategory::kInvalidArgument, "edge refers to an invalid node pair");
    }
    if (!(edge.weight > 0.0)) raise(ErrorCategory::kInvalidArgument, "edge weight must be > 0");
    adj[edge.u].push_back(e);
    adj[edge.v].push_back(e);
  }

  AveragingResult out;
  out.orientations.assign(n, Rotation::identity());
  std::vector<bool> fixed(n, false), seen(n, false);
  // Chaining along a breadth-first spanning tree of each component.
  for (std::size_t root = 0; root < n; ++root) {
    if (seen[root]) continue;
    ++out.components;
    fixed[root] = true;
    seen[root] = true;
    out.orientations[root] =
        root == 0 ? anchor : (fallback.empty() ? Rotation::identity() : fallback[root]);
    std::queue<std::size_t> queue;
    queue.push(root);
    while (!queue.empty()) {
      const std::size_t a = queue.front();
      queue.pop();
      for (std::size_t e : adj[a]) {
        const RelativeEdge& edge = edges[e];
        const std::size_t b = edge.u == a ? edge.v : edge.u;
        if (seen[b]) continue;
        seen[b] = true;
        out.orientations[b] = edge.u == a ? edge.r_uv * out.orientations[a]
                                          : edge.r_uv.inverse() * out.orientations[a];
        queue.push(b);
      }
    }
  }
  if (out.components > 1) {
    out.disconnected = true;
    out.warnings.push_back("pose graph has " + std::to_string(out.components) +
                           " components; detached ones anchored to the fallback");
  }

  // Unknowns: a left perturbation R <- exp(d) R per free node.
  std::vector<std::ptrdiff_t> column(n, -1);
  std::ptrdiff_t free_nodes = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!fixed[i]) column[i] = free_nodes++;
  }
  if (free_nodes == 0 || edges.empty()) {
    out.converged = true;
    return out;
  }
  const std::ptrdiff_t dim = 3 * free_nodes;
  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
  for (int it = 0; it < cfg.max_iterations; ++it) {
    out.iterations = it + 1;
    triplets.clear();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
    // Per edge: d_v - M d_u = eps, with M = R_v R_u^T and
    // exp(eps) = r_uv R_u R_v^T, to first order.
    for (const RelativeEdge& edge : edges) {
      const Rotation& ru = out.orientations[edge.u];
      const Rotation& rv = out.orientations[edge.v];
      const Eigen::Vector3d eps = log_so3(edge.r_uv * ru * rv.inverse());
      const double w = edge.weight * detail::huber_weight(eps.norm(), cfg.huber_scale);
      const Eigen::Matrix3d m = (rv * ru.inverse()).matrix();
      const std::ptrdiff_t cu = column[edge.u], cv = column[edge.v];
      // Jacobian blocks: J_v = I, J_u = -M.
      if (cv >= 0) {
        for (int r = 0; r < 3; ++r) triplets.emplace_back(3 * cv + r, 3 * cv + r, w);
        rhs.segment<3>(3 * cv) += w * eps;
      }
      if (cu >= 0) {
        // (-M)^T (-M) = I.
        for (int r = 0; r < 3; ++r) triplets.emplace_back(3 * cu + r, 3 * cu + r, w);
        rhs.segment<3>(3 * cu) -= w * m.transpose() * eps;
      }
      if (cu >= 0 && cv >= 0) {
        for (int r = 0; r < 3; ++r) {
          for (int c = 0; c < 3; ++c) {
            triplets.emplace_back(3 * cv + r, 3 * cu + c, -w * m(r, c));
            triplets.emplace_back(3 * cu + c, 3 * cv + r, -w * m(r, c));
          }
        }
      }
    }
    Eigen::SparseMatrix<double> h(dim, dim);
    h.setFromTriplets(triplets.begin(), triplets.end());
    if (it == 0) solver.analyzePattern(h);
    solver.factorize(h);
    if (solver.info() != Eigen::Success) {
      raise(ErrorCategory::kDegenerateGeometry, "rotation averaging system is singular");
    }
    const Eigen::VectorXd step = solver.solve(rhs);
    if (!step.allFinite()) {
      raise(ErrorCategory::kOptimizationFailure, "rotation averaging diverged");
    }
    double largest = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (column[i] < 0) continue;
      const Eigen::Vector3d d = step.segment<3>(3 * column[i]);
      largest = std::max(largest, d.norm());
      out.orientations[i] = (exp_so3(d) * out.orientations[i]).renormalized();
    }
    if (largest < cfg.tolerance) {
      out.converged = true;
      break;
    }
  }
  return out;
}

// Orientations by composing consecutive edges (u, u + 1) from the anchor.
// Missing links repeat the previous orientation.
inline std::vector<Rotation> chain_rotations(std::size_t n, std::span<const RelativeEdge> edges,
                                             const Rotation& anchor) {
  std::vector<const RelativeEdge*> next(n, nullptr);
  for (const RelativeEdge& e : edges) {
    if (e.v == e.u + 1 && e.v < n && !next[e.u]) next[e.u] = &e;
  }
  std::vector<Rotation> out(n, anchor);
  for (std::size_t i = 1; i < n; ++i) {
    out[i] = next[i - 1] ? next[i - 1]->r_uv * out[i - 1] : out[i - 1];
  }
  return out;
}

}  // namespace evstr
