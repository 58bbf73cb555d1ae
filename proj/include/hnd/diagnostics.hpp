#pragma once

// Energy, maximum-principle bounds and spectral estimates over trajectories.

#include "hnd/error.hpp"
#include "hnd/format.hpp"
#include "hnd/hypergraph.hpp"
#include "hnd/operators.hpp"
#include "hnd/rng.hpp"
#include "hnd/solvers.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <optional>
#include <ostream>
#include <vector>

namespace hnd {

inline constexpr double kEnergyRelativeTolerance = 1e-10;
inline constexpr double kBoundsSlack = 1e-9;

/// 1/2 (Gx)^T diag(a) (Gx), summed over feature columns.
template <typename Scalar, typename Derived>
Scalar energy(const Operators<Scalar>& ops, const Vector<Scalar>& a, const Eigen::MatrixBase<Derived>& x) {
  detail::require_rows(a.rows(), ops.pair_count(), "modulation");
  const Signal<Scalar> gx = ops.gradient(x);
  return Scalar(0.5) * (a.asDiagonal() * gx.cwiseAbs2()).sum();
}

struct EnergyReport {
  std::vector<double> energies;
  bool monotone = true;
  std::optional<std::size_t> first_violation;  // index k with E[k] > E[k-1] beyond tolerance
  double violation_magnitude = 0.0;            // E[k] - E[k-1] at the first violation
  double max_increase = 0.0;                   // largest E[k] - E[k-1] over the run
};

/// Energy at each state, with A taken per the system's policy at that state.
/// An increase counts when E[k] - E[k-1] > 1e-10 * max(|E[k-1]|, tiny).
template <typename Scalar>
EnergyReport energy_monotonicity(const DiffusionSystem<Scalar>& sys, const Trajectory<Scalar>& traj) {
  EnergyReport report;
  for (const auto& x : traj.states) {
    report.energies.push_back(static_cast<double>(energy(sys.operators(), sys.weights(x), x)));
  }
  for (std::size_t k = 1; k < report.energies.size(); ++k) {
    const double prev = report.energies[k - 1];
    const double delta = report.energies[k] - prev;
    report.max_increase = std::max(report.max_increase, delta);
    const double allowed = kEnergyRelativeTolerance * std::max(std::abs(prev), std::numeric_limits<double>::min());
    if (delta > allowed && report.monotone) {
      report.monotone = false;
      report.first_violation = k;
      report.violation_magnitude = delta;
    }
  }
  return report;
}

struct BoundsReport {
  std::vector<double> m0;             // per column
  std::vector<double> M0;             // per column
  std::vector<double> step_violation;  // worst excursion outside [m0, M0] per state
  double max_violation = 0.0;
  bool holds = true;
};

/// Checks m0 - 1e-9 <= x_v(t)/sqrt(d_v) <= M0 + 1e-9 per column.
template <typename Scalar>
BoundsReport max_principle(const Trajectory<Scalar>& traj, const Degrees& degrees) {
  if (traj.states.empty()) throw Error(ErrorKind::ShapeMismatch, "empty trajectory");
  const Vector<Scalar> inv_sqrt = degrees.node.cast<Scalar>().cwiseSqrt().cwiseInverse();
  detail::require_rows(traj.states.front().rows(), inv_sqrt.rows(), "max_principle");
  BoundsReport report;
  const Signal<Scalar> y0 = inv_sqrt.asDiagonal() * traj.states.front();
  const Index d = y0.cols();
  for (Index c = 0; c < d; ++c) {
    report.m0.push_back(static_cast<double>(y0.col(c).minCoeff()));
    report.M0.push_back(static_cast<double>(y0.col(c).maxCoeff()));
  }
  for (const auto& x : traj.states) {
    const Signal<Scalar> y = inv_sqrt.asDiagonal() * x;
    double worst = 0.0;
    for (Index c = 0; c < d; ++c) {
      const auto cu = static_cast<std::size_t>(c);
      const double below = report.m0[cu] - static_cast<double>(y.col(c).minCoeff());
      const double above = static_cast<double>(y.col(c).maxCoeff()) - report.M0[cu];
      worst = std::max({worst, below, above});
      if (!std::isfinite(below) || !std::isfinite(above)) worst = std::numeric_limits<double>::infinity();
    }
    report.step_violation.push_back(worst);
    report.max_violation = std::max(report.max_violation, worst);
  }
  report.holds = report.max_violation <= kBoundsSlack;
  return report;
}

struct SpectralEstimate {
  double value = 0.0;
  int iterations = 0;
  double residual = 0.0;  // ||M v - lambda v|| for the final unit vector
  bool converged = false;
};

/// Power iteration for lambda_max(G^T diag(a) G) from a seeded random start.
/// Stops when ||M v - lambda v|| <= tol.
template <typename Scalar>
SpectralEstimate spectral_radius(const Operators<Scalar>& ops, const Vector<Scalar>& a, int iters, double tol,
                                 std::uint64_t seed = 0x5eed) {
  if (iters < 1) throw Error(ErrorKind::InvalidConfig, "iters must be at least 1");
  SplitMix64 rng(seed);
  Signal<Scalar> v(ops.node_count(), 1);
  for (Index i = 0; i < v.rows(); ++i) v(i, 0) = Scalar(rng.uniform(-1.0, 1.0));
  v /= v.norm();
  SpectralEstimate est;
  for (int it = 1; it <= iters; ++it) {
    Signal<Scalar> mv = ops.apply(a, v);
    const Scalar lambda = v.cwiseProduct(mv).sum();
    const double residual = static_cast<double>((mv - lambda * v).norm());
    est.value = static_cast<double>(lambda);
    est.iterations = it;
    est.residual = residual;
    if (residual <= tol) {
      est.converged = true;
      break;
    }
    const Scalar norm = mv.norm();
    if (norm == Scalar(0)) {
      est.converged = true;
      break;
    }
    v = mv / norm;
  }
  return est;
}

// --- serialization ---------------------------------------------------------

inline nlohmann::json to_json(const EnergyReport& r) {
  nlohmann::json j;
  j["energies"] = r.energies;
  j["monotone"] = r.monotone;
  j["first_violation"] = r.first_violation ? nlohmann::json(*r.first_violation) : nlohmann::json(nullptr);
  j["violation_magnitude"] = r.violation_magnitude;
  j["max_increase"] = r.max_increase;
  return j;
}

inline nlohmann::json to_json(const BoundsReport& r) {
  nlohmann::json j;
  j["m0"] = r.m0;
  j["M0"] = r.M0;
  j["step_violation"] = r.step_violation;
  j["max_violation"] = r.max_violation;
  j["holds"] = r.holds;
  return j;
}

inline nlohmann::json to_json(const SpectralEstimate& s) {
  return {{"value", s.value}, {"iterations", s.iterations}, {"residual", s.residual}, {"converged", s.converged}};
}

/// CSV columns step,time,tau,state_norm,energy; tau is the step that led to
/// the row's state (0 on the initial row).
template <typename Scalar>
void write_trajectory_csv(std::ostream& os, const Trajectory<Scalar>& traj, const EnergyReport& energies) {
  os << "step,time,tau,state_norm,energy\n";
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    const double tau = k == 0 ? 0.0 : traj.step_sizes[k - 1];
    os << k << ',' << format_double(traj.times[k]) << ',' << format_double(tau) << ','
       << format_double(static_cast<double>(traj.states[k].norm())) << ','
       << format_double(k < energies.energies.size() ? energies.energies[k] : 0.0) << '\n';
  }
}

inline constexpr char kTrajectoryMagic[8] = {'H', 'N', 'D', 'T', 'R', 'A', 'J', '1'};

/// Binary dump: magic, uint64 n, d, state count, then per state a float64
/// time followed by n*d row-major float64 values. Little-endian host order.
template <typename Scalar>
void write_trajectory_binary(std::ostream& os, const Trajectory<Scalar>& traj) {
  const std::uint64_t n = traj.states.empty() ? 0 : static_cast<std::uint64_t>(traj.states.front().rows());
  const std::uint64_t d = traj.states.empty() ? 0 : static_cast<std::uint64_t>(traj.states.front().cols());
  const std::uint64_t count = traj.states.size();
  os.write(kTrajectoryMagic, sizeof(kTrajectoryMagic));
  for (std::uint64_t h : {n, d, count}) os.write(reinterpret_cast<const char*>(&h), sizeof(h));
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    const double t = traj.times[k];
    os.write(reinterpret_cast<const char*>(&t), sizeof(t));
    const Signal<double> s = traj.states[k].template cast<double>();
    os.write(reinterpret_cast<const char*>(s.data()), static_cast<std::streamsize>(s.size() * sizeof(double)));
  }
}

}  // namespace hnd
