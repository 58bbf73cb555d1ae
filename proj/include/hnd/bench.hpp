#pragma once

// Convergence study of the integrators on a frozen-A linear system against
// the exact solution exp(-T M) x0, M = G^T diag(a) G.

#include "hnd/hypergraph.hpp"
#include "hnd/modulation.hpp"
#include "hnd/operators.hpp"
#include "hnd/rng.hpp"
#include "hnd/solvers.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <chrono>
#include <cmath>
#include <vector>

namespace hnd {

struct LinearCase {
  Hypergraph hypergraph;
  Eigen::VectorXd weights;
  NodeSignal x0;
  double horizon = 2.0;
};

/// 16 nodes, 10 random weighted edges, softmax weights frozen at a random start.
inline LinearCase bundled_linear_case(std::uint64_t seed = 7) {
  SplitMix64 rng(derive_seed(seed, 0x11ea));
  const Index n = 16;
  std::vector<std::vector<Index>> edges;
  std::vector<double> weights;
  std::vector<Index> nodes(static_cast<std::size_t>(n));
  for (Index v = 0; v < n; ++v) nodes[static_cast<std::size_t>(v)] = v;
  for (Index e = 0; e < 10; ++e) {
    rng.shuffle(nodes.begin(), nodes.end());
    const Index size = 2 + static_cast<Index>(rng.below(4));
    edges.emplace_back(nodes.begin(), nodes.begin() + size);
    weights.push_back(rng.uniform(0.5, 2.0));
  }
  for (Index v = 0; v < n; ++v) edges.push_back({v, (v + 1) % n});
  weights.resize(edges.size(), 1.0);
  Hypergraph hg = Hypergraph::create(n, std::move(edges), std::move(weights));
  NodeSignal x0(n, 2);
  for (Index i = 0; i < x0.size(); ++i) x0.data()[i] = rng.normal();
  const auto params = AttentionParams<double>::random(2, rng);
  Eigen::VectorXd a = softmax_modulation(params, x0, hg);
  return LinearCase{std::move(hg), std::move(a), std::move(x0), 2.0};
}

/// Dense G^T diag(a) G.
inline Eigen::MatrixXd dense_diffusion_matrix(const Operators<double>& ops, const Eigen::VectorXd& a) {
  const Index n = ops.node_count();
  const NodeSignal eye = NodeSignal::Identity(n, n);
  return ops.apply(a, eye);
}

inline NodeSignal exact_linear_solution(const LinearCase& c) {
  Operators<double> ops(c.hypergraph);
  const Eigen::MatrixXd m = dense_diffusion_matrix(ops, c.weights);
  const Eigen::MatrixXd propagator = (-c.horizon * m).exp();
  return propagator * c.x0;
}

struct ConvergenceRow {
  Scheme scheme = Scheme::ExplicitEuler;
  double tau = 0.0;  // fixed step, or tolerance for the adaptive scheme
  Index steps = 0;
  double error = 0.0;
  long rhs_evaluations = 0;
  long accepted = 0;
  long rejected = 0;
  double wall_seconds = 0.0;
};

/// One row per (scheme, tau). For the adaptive scheme `taus` are tolerances.
inline std::vector<ConvergenceRow> convergence_study(const LinearCase& c, Scheme scheme,
                                                     const std::vector<double>& taus) {
  Operators<double> ops(c.hypergraph);
  const NodeSignal exact = exact_linear_solution(c);
  std::vector<ConvergenceRow> rows;
  for (double tau : taus) {
    DiffusionSystem<double> sys(ops, c.weights);
    SolverSpec spec;
    spec.scheme = scheme;
    if (scheme == Scheme::Adaptive) {
      spec.tau = c.horizon;
      spec.steps = 1;
      spec.adaptive.tol = tau;
    } else {
      spec.tau = tau;
      spec.steps = static_cast<Index>(std::llround(c.horizon / tau));
    }
    const auto start = std::chrono::steady_clock::now();
    const auto traj = integrate(sys, c.x0, spec);
    const auto stop = std::chrono::steady_clock::now();
    ConvergenceRow row;
    row.scheme = scheme;
    row.tau = tau;
    row.steps = static_cast<Index>(traj.step_sizes.size());
    row.error = (traj.final_state() - exact).norm();
    row.rhs_evaluations = traj.rhs_evaluations;
    row.accepted = traj.accepted_steps;
    row.rejected = traj.rejected_steps;
    row.wall_seconds = std::chrono::duration<double>(stop - start).count();
    rows.push_back(row);
  }
  return rows;
}

/// Least-squares slope of log(error) against log(tau).
inline double richardson_slope(const std::vector<ConvergenceRow>& rows) {
  const double k = static_cast<double>(rows.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& r : rows) {
    const double x = std::log(r.tau);
    const double y = std::log(r.error);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (k * sxy - sx * sy) / (k * sxx - sx * sx);
}

}  // namespace hnd
