#pragma once

// Time integration of dx/dt = -G^T A(x) G x.
//
// f(x) = G^T A(x) G x is the (positive) diffusion operator; rhs(x) = -f(x).
// Modulation is either frozen at the initial state or re-evaluated at every
// stage and step.

#include "hnd/error.hpp"
#include "hnd/hypergraph.hpp"
#include "hnd/operators.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hnd {

enum class Scheme { ExplicitEuler, ImplicitEuler, Rk4, Ab4, Am4, Adaptive };
enum class ModulationPolicy { Frozen, Recompute };

inline Scheme parse_scheme(std::string_view name) {
  if (name == "explicit_euler" || name == "euler" || name == "explicit") return Scheme::ExplicitEuler;
  if (name == "implicit_euler" || name == "implicit") return Scheme::ImplicitEuler;
  if (name == "rk4") return Scheme::Rk4;
  if (name == "ab4") return Scheme::Ab4;
  if (name == "am4") return Scheme::Am4;
  if (name == "adaptive") return Scheme::Adaptive;
  throw Error(ErrorKind::InvalidConfig, "unknown scheme '" + std::string(name) + "'");
}

constexpr std::string_view to_string(Scheme s) {
  switch (s) {
    case Scheme::ExplicitEuler: return "explicit_euler";
    case Scheme::ImplicitEuler: return "implicit_euler";
    case Scheme::Rk4: return "rk4";
    case Scheme::Ab4: return "ab4";
    case Scheme::Am4: return "am4";
    case Scheme::Adaptive: return "adaptive";
  }
  return "unknown";
}

constexpr std::string_view to_string(ModulationPolicy p) {
  return p == ModulationPolicy::Frozen ? "frozen" : "recompute_each_step";
}

/// Adams-Bashforth (newest first) and Adams-Moulton (implicit term first).
inline constexpr std::array<double, 4> kAb4Coefficients{55.0 / 24, -59.0 / 24, 37.0 / 24, -9.0 / 24};
inline constexpr std::array<double, 4> kAm4Coefficients{9.0 / 24, 19.0 / 24, -5.0 / 24, 1.0 / 24};

struct AdaptiveParams {
  double tol = 1e-6;
  double fac_min = 0.2;
  double fac_max = 5.0;
  double tau_init = 0.1;
  double tau_min = 1e-10;
  double tau_max = 1.0;
  int order_p = 3;
};

struct SolverSpec {
  Scheme scheme = Scheme::ExplicitEuler;
  double tau = 1.0;
  Index steps = 4;
  ModulationPolicy modulation_policy = ModulationPolicy::Frozen;
  double fp_tol = 1e-10;
  int fp_max_iter = 100;
  AdaptiveParams adaptive;

  double horizon() const noexcept { return tau * static_cast<double>(steps); }

  void validate() const {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw Error(ErrorKind::InvalidConfig, "tau must be positive");
    if (steps < 0) throw Error(ErrorKind::InvalidConfig, "steps must be non-negative");
    if (!(fp_tol > 0.0)) throw Error(ErrorKind::InvalidConfig, "fp_tol must be positive");
    if (fp_max_iter < 1) throw Error(ErrorKind::InvalidConfig, "fp_max_iter must be at least 1");
    const auto& a = adaptive;
    if (!(a.fac_min > 0.0 && a.fac_min <= 1.0 && a.fac_max >= 1.0)) {
      throw Error(ErrorKind::InvalidConfig, "need 0 < fac_min <= 1 <= fac_max");
    }
    if (!(a.tol > 0.0) || !(a.tau_min > 0.0) || !(a.tau_max >= a.tau_min) || !(a.tau_init > 0.0) || a.order_p < 1) {
      throw Error(ErrorKind::InvalidConfig, "invalid adaptive parameters");
    }
  }
};

template <typename Scalar>
using ModulationFn = std::function<Vector<Scalar>(const Signal<Scalar>&)>;

/// -G^T diag(a) G x.
template <typename Scalar, typename Derived>
Signal<Scalar> rhs(const Operators<Scalar>& ops, const Vector<Scalar>& a, const Eigen::MatrixBase<Derived>& x) {
  return -ops.apply(a, x);
}

/// The operator, the modulation map and its policy, plus evaluation counters.
template <typename Scalar = double>
class DiffusionSystem {
 public:
  DiffusionSystem(const Operators<Scalar>& ops, ModulationFn<Scalar> modulation, ModulationPolicy policy)
      : ops_(&ops), modulation_(std::move(modulation)), policy_(policy) {}

  /// Constant modulation; policy is irrelevant.
  DiffusionSystem(const Operators<Scalar>& ops, Vector<Scalar> weights)
      : ops_(&ops), policy_(ModulationPolicy::Frozen), frozen_(std::move(weights)), constant_(true) {
    detail::require_rows(frozen_->rows(), ops.pair_count(), "modulation");
  }

  const Operators<Scalar>& operators() const noexcept { return *ops_; }
  ModulationPolicy policy() const noexcept { return policy_; }

  /// Called at the start of an integration; freezes A at x0 under the frozen policy.
  void begin(const Signal<Scalar>& x0) {
    if (!constant_ && policy_ == ModulationPolicy::Frozen) frozen_ = modulation_(x0);
  }

  Vector<Scalar> weights(const Signal<Scalar>& x) const {
    if (frozen_) return *frozen_;
    if (!modulation_) throw Error(ErrorKind::InvalidConfig, "modulation map missing");
    return modulation_(x);
  }

  /// f(x) = G^T A(x) G x.
  Signal<Scalar> diffusion(const Signal<Scalar>& x) {
    ++rhs_evaluations_;
    return ops_->apply(weights(x), x);
  }

  Signal<Scalar> rhs(const Signal<Scalar>& x) { return -diffusion(x); }

  long rhs_evaluations() const noexcept { return rhs_evaluations_; }

 private:
  const Operators<Scalar>* ops_;
  ModulationFn<Scalar> modulation_;
  ModulationPolicy policy_;
  std::optional<Vector<Scalar>> frozen_;
  bool constant_ = false;
  long rhs_evaluations_ = 0;
};

template <typename Scalar = double>
struct Trajectory {
  std::vector<double> times;
  std::vector<Signal<Scalar>> states;
  std::vector<double> step_sizes;  // step_sizes[k] took states[k] to states[k+1]
  long accepted_steps = 0;
  long rejected_steps = 0;
  long rhs_evaluations = 0;
  long solver_iterations = 0;  // implicit outer iterations, summed

  const Signal<Scalar>& final_state() const { return states.back(); }
  std::size_t size() const noexcept { return states.size(); }

  void push(double t, Signal<Scalar> x) {
    times.push_back(t);
    states.push_back(std::move(x));
  }
};

// --- single steps -------------------------------------------------------------

template <typename Scalar>
Signal<Scalar> step_explicit_euler(DiffusionSystem<Scalar>& sys, const Signal<Scalar>& x, double tau) {
  return x - Scalar(tau) * sys.diffusion(x);
}

/// Classical RK4 on dx/dt = -f(x); stages p1..p4 of f, combined with a minus sign.
template <typename Scalar>
Signal<Scalar> step_rk4(DiffusionSystem<Scalar>& sys, const Signal<Scalar>& x, double tau) {
  const Scalar h(tau);
  const Signal<Scalar> p1 = sys.diffusion(x);
  const Signal<Scalar> p2 = sys.diffusion(x - (h / 2) * p1);
  const Signal<Scalar> p3 = sys.diffusion(x - (h / 2) * p2);
  const Signal<Scalar> p4 = sys.diffusion(x - h * p3);
  return x - (h / 6) * (p1 + 2 * p2 + 2 * p3 + p4);
}

template <typename Scalar>
struct ImplicitStep {
  Signal<Scalar> state;
  int outer_iterations = 0;
  long cg_iterations = 0;
  double residual = 0.0;
};

namespace detail {

/// Conjugate gradients on (I + tau G^T diag(a) G) y = b, all columns at once
/// under the Frobenius inner product.
template <typename Scalar>
long conjugate_gradient(const Operators<Scalar>& ops, const Vector<Scalar>& a, Scalar tau,
                        const Signal<Scalar>& b, Signal<Scalar>& y, double tol, long max_iter) {
  auto apply = [&](const Signal<Scalar>& v) -> Signal<Scalar> { return v + tau * ops.apply(a, v); };
  Signal<Scalar> r = b - apply(y);
  Scalar rr = r.squaredNorm();
  if (std::sqrt(static_cast<double>(rr)) <= tol) return 0;
  Signal<Scalar> p = r;
  for (long it = 1; it <= max_iter; ++it) {
    const Signal<Scalar> kp = apply(p);
    const Scalar alpha = rr / (p.cwiseProduct(kp)).sum();
    y += alpha * p;
    r -= alpha * kp;
    const Scalar rr_next = r.squaredNorm();
    if (std::sqrt(static_cast<double>(rr_next)) <= tol) return it;
    p = r + (rr_next / rr) * p;
    rr = rr_next;
  }
  return max_iter;
}

}  // namespace detail

/// Implicit Euler: outer fixed point on A, inner CG on the frozen-A SPD system.
/// Returns once ||x' - x + tau f(x')|| <= fp_tol with A evaluated at x'.
template <typename Scalar>
ImplicitStep<Scalar> step_implicit_euler(DiffusionSystem<Scalar>& sys, const Signal<Scalar>& x, double tau,
                                         double fp_tol, int fp_max_iter) {
  const auto& ops = sys.operators();
  ImplicitStep<Scalar> result{x, 0, 0, 0.0};
  if (tau == 0.0) return result;
  const long cg_cap = std::max<long>(1000, 20 * static_cast<long>(x.size()));
  Vector<Scalar> a = sys.weights(x);
  Signal<Scalar> y = x;
  double residual = 0.0;
  for (int outer = 1; outer <= fp_max_iter; ++outer) {
    result.cg_iterations += detail::conjugate_gradient(ops, a, Scalar(tau), x, y, 0.5 * fp_tol, cg_cap);
    a = sys.weights(y);
    const Signal<Scalar> r = y - x + Scalar(tau) * sys.diffusion(y);
    residual = static_cast<double>(r.norm());
    result.outer_iterations = outer;
    if (residual <= fp_tol) {
      result.state = std::move(y);
      result.residual = residual;
      return result;
    }
  }
  throw Error(ErrorKind::NoConvergence,
              "implicit Euler did not converge in " + std::to_string(fp_max_iter) +
                  " outer iterations (residual " + std::to_string(residual) + ")",
              residual);
}

// --- integrators ----------------------------------------------------------------

/// Fixed-step explicit Euler, implicit Euler or RK4.
template <typename Scalar>
Trajectory<Scalar> integrate_fixed(DiffusionSystem<Scalar>& sys, const Signal<Scalar>& x0, const SolverSpec& spec) {
  Trajectory<Scalar> traj;
  sys.begin(x0);
  const long evals_before = sys.rhs_evaluations();
  traj.push(0.0, x0);
  for (Index k = 0; k < spec.steps; ++k) {
    const Signal<Scalar>& x = traj.states.back();
    Signal<Scalar> next;
    switch (spec.scheme) {
      case Scheme::ExplicitEuler: next = step_explicit_euler(sys, x, spec.tau); break;
      case Scheme::Rk4: next = step_rk4(sys, x, spec.tau); break;
      case Scheme::ImplicitEuler: {
        auto step = step_implicit_euler(sys, x, spec.tau, spec.fp_tol, spec.fp_max_iter);
        traj.solver_iterations += step.outer_iterations;
        next = std::move(step.state);
        break;
      }
      default: throw Error(ErrorKind::InvalidConfig, "integrate_fixed: unsupported scheme");
    }
    traj.step_sizes.push_back(spec.tau);
    traj.push(spec.tau * static_cast<double>(k + 1), std::move(next));
    ++traj.accepted_steps;
  }
  traj.rhs_evaluations = sys.rhs_evaluations() - evals_before;
  return traj;
}

/// AB4, or AM4 as AB4-predict / AM4-correct once. The first three steps come from RK4.
template <typename Scalar>
Trajectory<Scalar> integrate_multistep(DiffusionSystem<Scalar>& sys, Scheme scheme, const Signal<Scalar>& x0,
                                       double tau, Index steps) {
  if (scheme != Scheme::Ab4 && scheme != Scheme::Am4) {
    throw Error(ErrorKind::InvalidConfig, "integrate_multistep needs ab4 or am4");
  }
  if (steps < 4) throw Error(ErrorKind::TooFewSteps, "multistep schemes need at least 4 steps");
  Trajectory<Scalar> traj;
  sys.begin(x0);
  const long evals_before = sys.rhs_evaluations();
  const Scalar h(tau);
  traj.push(0.0, x0);
  std::deque<Signal<Scalar>> history;  // f at the newest states, newest first
  history.push_front(sys.diffusion(x0));
  for (Index k = 0; k < steps; ++k) {
    const Signal<Scalar>& x = traj.states.back();
    Signal<Scalar> next;
    if (k < 3) {
      next = step_rk4(sys, x, tau);
    } else {
      Signal<Scalar> increment = Signal<Scalar>::Zero(x.rows(), x.cols());
      for (std::size_t j = 0; j < 4; ++j) increment += Scalar(kAb4Coefficients[j]) * history[j];
      next = x - h * increment;
      if (scheme == Scheme::Am4) {
        increment = Scalar(kAm4Coefficients[0]) * sys.diffusion(next);
        for (std::size_t j = 1; j < 4; ++j) increment += Scalar(kAm4Coefficients[j]) * history[j - 1];
        next = x - h * increment;
      }
    }
    history.push_front(sys.diffusion(next));
    if (history.size() > 4) history.pop_back();
    traj.step_sizes.push_back(tau);
    traj.push(tau * static_cast<double>(k + 1), std::move(next));
    ++traj.accepted_steps;
  }
  traj.rhs_evaluations = sys.rhs_evaluations() - evals_before;
  return traj;
}

/// min(max(fac_min, (tol/error)^(1/(p+1))), fac_max); error 0 gives fac_max.
inline double step_size_factor(double tol, double error, double fac_min, double fac_max, int p) {
  if (error <= 0.0) return fac_max;
  const double raw = std::pow(tol / error, 1.0 / static_cast<double>(p + 1));
  return std::min(std::max(fac_min, raw), fac_max);
}

/// Bogacki-Shampine 3(2) with first-same-as-last reuse. The third-order
/// solution advances; error = ||x_3 - x_2||.
template <typename Scalar>
Trajectory<Scalar> integrate_adaptive(DiffusionSystem<Scalar>& sys, const Signal<Scalar>& x0, double horizon,
                                      const AdaptiveParams& params) {
  if (!(horizon > 0.0)) throw Error(ErrorKind::InvalidConfig, "horizon must be positive");
  if (!(params.tol > 0.0)) throw Error(ErrorKind::InvalidConfig, "tol must be positive");
  Trajectory<Scalar> traj;
  sys.begin(x0);
  const long evals_before = sys.rhs_evaluations();
  traj.push(0.0, x0);
  double t = 0.0;
  double tau = std::clamp(params.tau_init, params.tau_min, params.tau_max);
  Signal<Scalar> k1 = sys.rhs(x0);
  while (t < horizon) {
    const bool last = t + tau >= horizon * (1.0 - 1e-14);
    const double h_used = last ? horizon - t : tau;
    const Scalar h(h_used);
    const Signal<Scalar>& x = traj.states.back();
    const Signal<Scalar> k2 = sys.rhs(x + (h / 2) * k1);
    const Signal<Scalar> k3 = sys.rhs(x + (h * 3 / 4) * k2);
    Signal<Scalar> x3 = x + h * (Scalar(2.0 / 9) * k1 + Scalar(1.0 / 3) * k2 + Scalar(4.0 / 9) * k3);
    Signal<Scalar> k4 = sys.rhs(x3);
    const Signal<Scalar> x2 =
        x + h * (Scalar(7.0 / 24) * k1 + Scalar(1.0 / 4) * k2 + Scalar(1.0 / 3) * k3 + Scalar(1.0 / 8) * k4);
    const double error = static_cast<double>((x3 - x2).norm());
    const double factor = step_size_factor(params.tol, error, params.fac_min, params.fac_max, params.order_p);
    const double proposed = h_used * factor;
    if (error <= params.tol) {
      t = last ? horizon : t + h_used;
      traj.step_sizes.push_back(h_used);
      traj.push(t, std::move(x3));
      k1 = std::move(k4);
      ++traj.accepted_steps;
      if (!last) tau = std::clamp(proposed, params.tau_min, params.tau_max);
    } else {
      ++traj.rejected_steps;
      if (proposed < params.tau_min) {
        throw Error(ErrorKind::StepUnderflow,
                    "step size " + std::to_string(proposed) + " below tau_min at t = " + std::to_string(t),
                    error);
      }
      tau = std::min(proposed, params.tau_max);
    }
  }
  traj.rhs_evaluations = sys.rhs_evaluations() - evals_before;
  return traj;
}

/// Dispatches on spec.scheme. The adaptive scheme integrates to spec.horizon().
template <typename Scalar>
Trajectory<Scalar> integrate(DiffusionSystem<Scalar>& sys, const Signal<Scalar>& x0, const SolverSpec& spec) {
  spec.validate();
  switch (spec.scheme) {
    case Scheme::ExplicitEuler:
    case Scheme::ImplicitEuler:
    case Scheme::Rk4: return integrate_fixed(sys, x0, spec);
    case Scheme::Ab4:
    case Scheme::Am4: return integrate_multistep(sys, spec.scheme, x0, spec.tau, spec.steps);
    case Scheme::Adaptive: {
      if (spec.steps == 0) {
        Trajectory<Scalar> traj;
        traj.push(0.0, x0);
        return traj;
      }
      return integrate_adaptive(sys, x0, spec.horizon(), spec.adaptive);
    }
  }
  throw Error(ErrorKind::InvalidConfig, "unknown scheme");
}

}  // namespace hnd
