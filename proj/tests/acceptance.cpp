#include "dense_reference.hpp"

#include "hnd/bench.hpp"
#include "hnd/diagnostics.hpp"
#include "hnd/model.hpp"
#include "hnd/modulation.hpp"
#include "hnd/operators.hpp"
#include "hnd/solvers.hpp"

#include <CLI11.hpp>
#include <Eigen/Dense>

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace hnd {
namespace {

namespace fs = std::filesystem;
using testing::Dense;

// Pinned tolerances and limits.
constexpr double kAdjointTol = 1e-10;
constexpr double kLaplacianTol = 1e-12;
constexpr double kSymmetryTol = 1e-12;
constexpr double kEigenSlack = 1e-9;
constexpr double kNullTol = 1e-12;
constexpr double kSumTol = 1e-12;
constexpr double kShiftTol = 1e-12;
constexpr double kGradientFlowTol = 1e-4;
constexpr double kBoundsTol = 1e-9;
constexpr double kNormSlack = 1e-12;
constexpr double kWitnessLambda = 1.9;
constexpr double kWitnessTau = 1.5;
constexpr double kWitnessGrowth = 10.0;
constexpr double kRk4Slope = 3.8;
constexpr double kAb4Slope = 3.5;
constexpr double kEulerSlope = 1.0;
constexpr double kEulerSlopeTol = 0.2;
constexpr double kAdaptiveFactor = 50.0;
constexpr double kGradcheckRel = 1e-5;
constexpr double kGradcheckFloor = 1e-8;
constexpr double kGradcheckStep = 1e-5;
constexpr double kAccuracyGain = 0.02;
constexpr double kDepthWindow = 0.05;

struct Verdict {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double elapsed(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

/// n <= 60 nodes, m <= 40 edges of size 2..8, uncovered nodes dropped.
Hypergraph bounded_hypergraph(SplitMix64& rng) {
  const Index n0 = 3 + static_cast<Index>(rng.below(58));
  const Index m = 1 + static_cast<Index>(rng.below(40));
  std::vector<Index> nodes(static_cast<std::size_t>(n0));
  for (Index v = 0; v < n0; ++v) nodes[static_cast<std::size_t>(v)] = v;
  std::vector<std::vector<Index>> edges;
  std::vector<double> weights;
  for (Index e = 0; e < m; ++e) {
    const Index size = 2 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(std::min<Index>(8, n0) - 1)));
    rng.shuffle(nodes.begin(), nodes.end());
    edges.emplace_back(nodes.begin(), nodes.begin() + size);
    weights.push_back(rng.uniform(0.5, 2.0));
  }
  std::vector<Index> relabel(static_cast<std::size_t>(n0), -1);
  Index n = 0;
  for (auto& edge : edges)
    for (Index& v : edge) {
      if (relabel[static_cast<std::size_t>(v)] < 0) relabel[static_cast<std::size_t>(v)] = n++;
      v = relabel[static_cast<std::size_t>(v)];
    }
  return Hypergraph::create(n, std::move(edges), std::move(weights));
}

std::vector<Hypergraph> random_family(std::uint64_t seed, int count) {
  SplitMix64 rng(seed);
  std::vector<Hypergraph> out;
  for (int i = 0; i < count; ++i) out.push_back(bounded_hypergraph(rng));
  return out;
}

Eigen::VectorXd random_normalized(const Hypergraph& hg, SplitMix64& rng, double scale = 1.0) {
  Eigen::VectorXd s(hg.pair_count());
  for (Index p = 0; p < s.size(); ++p) s[p] = scale * rng.normal();
  return normalize_modulation(s, hg);
}

Verdict criterion_1() {
  const auto start = std::chrono::steady_clock::now();
  const auto family = random_family(101, 50);
  SplitMix64 rng(102);
  double adjoint = 0, laplacian = 0, symmetry = 0, lo = 1e300, hi = -1e300;
  Index max_n = 0, max_m = 0;
  for (const auto& hg : family) {
    max_n = std::max(max_n, hg.node_count());
    max_m = std::max(max_m, hg.edge_count());
    const NodeSignal f = testing::random_signal(rng, hg.node_count(), 3);
    const PairSignal g = testing::random_signal(rng, hg.pair_count(), 3);
    const double lhs = pair_inner_product(hg, gradient_apply(hg, f), g);
    const double rhs = f.cwiseProduct(divergence_apply(hg, g)).sum();
    adjoint = std::max(adjoint, std::abs(lhs - rhs) / (1.0 + std::abs(rhs)));
    const Dense G = scaled_gradient_matrix(hg).to_dense();
    const Dense closed = testing::dense_laplacian(testing::dense_reference(hg));
    laplacian = std::max(laplacian, (G.transpose() * G - closed).cwiseAbs().maxCoeff());
    const Dense L = laplacian_matrix(hg).to_dense();
    symmetry = std::max(symmetry, (L - L.transpose()).cwiseAbs().maxCoeff());
    Eigen::SelfAdjointEigenSolver<Dense> eig(L);
    lo = std::min(lo, eig.eigenvalues().minCoeff());
    hi = std::max(hi, eig.eigenvalues().maxCoeff());
  }
  const double secs = elapsed(start);
  Verdict v;
  v.pass = adjoint <= kAdjointTol && laplacian <= kLaplacianTol && symmetry <= kSymmetryTol &&
           lo >= -kEigenSlack && hi <= 2.0 + kEigenSlack && secs < 30.0 && max_n <= 60 && max_m <= 40;
  v.detail = "50 hypergraphs (n<=" + std::to_string(max_n) + ", m<=" + std::to_string(max_m) +
             "): adjoint " + fmt("%.2e", adjoint) + ", |GtG-L| " + fmt("%.2e", laplacian) + ", asym " +
             fmt("%.2e", symmetry) + ", eig [" + fmt("%.3g", lo) + ", " + fmt("%.6f", hi) + "], " +
             fmt("%.1fs", secs);
  return v;
}

Verdict criterion_2() {
  std::vector<Hypergraph> family = random_family(201, 50);
  for (Index alpha = 1; alpha <= 7; alpha += 3) family.push_back(generate_sbm({50, 40, 15, alpha, 2, 1.0, 3}).hypergraph);
  family.push_back(generate_sbm({250, 100, 15, 1, 2, 1.0, 0}).hypergraph);
  double grad = 0, lap = 0;
  for (const auto& hg : family) {
    Operators<double> ops(hg);
    const NodeSignal u = hg.degree_info().node.cwiseSqrt();
    grad = std::max(grad, ops.gradient(u).cwiseAbs().maxCoeff());
    lap = std::max(lap, laplacian_matrix(hg).apply(u).cwiseAbs().maxCoeff());
  }
  Verdict v;
  v.pass = grad <= kNullTol && lap <= kNullTol;
  v.detail = std::to_string(family.size()) + " hypergraphs: |grad D^1/2 1| " + fmt("%.2e", grad) +
             ", |L D^1/2 1| " + fmt("%.2e", lap);
  return v;
}

Verdict criterion_3() {
  const auto family = random_family(301, 50);
  SplitMix64 rng(302);
  double min_weight = 1e300, sum_err = 0, shift_err = 0;
  for (const auto& hg : family) {
    const Index d = 1 + static_cast<Index>(rng.below(6));
    const auto params = AttentionParams<double>::random(d, rng);
    const NodeSignal x = testing::random_signal(rng, hg.node_count(), d);
    const Eigen::VectorXd a = softmax_modulation(params, x, hg);
    min_weight = std::min(min_weight, a.minCoeff());
    const auto& inc = hg.incidence();
    for (Index v = 0; v < hg.node_count(); ++v) {
      double s = 0;
      for (Index k = inc.node_offsets[static_cast<std::size_t>(v)]; k < inc.node_offsets[static_cast<std::size_t>(v) + 1]; ++k)
        s += a[inc.node_pairs[static_cast<std::size_t>(k)]];
      sum_err = std::max(sum_err, std::abs(s - 1.0));
    }
    const Eigen::VectorXd scores = similarity_scores(params, x, hg);
    const double shift = 10.0 * rng.normal();
    const Eigen::VectorXd shifted = normalize_modulation<double>((scores.array() + shift).matrix(), hg);
    shift_err = std::max(shift_err, (shifted - normalize_modulation(scores, hg)).cwiseAbs().maxCoeff());
  }
  Verdict v;
  v.pass = min_weight > 0 && sum_err <= kSumTol && shift_err <= kShiftTol;
  v.detail = "50 instances: min weight " + fmt("%.3g", min_weight) + ", |sum-1| " + fmt("%.2e", sum_err) +
             ", shift " + fmt("%.2e", shift_err);
  return v;
}

struct Run {
  Hypergraph hg;
  NodeSignal x0;
  AttentionParams<double> params;
};

std::vector<Run> random_runs(std::uint64_t seed, int count) {
  SplitMix64 rng(seed);
  std::vector<Run> runs;
  for (int i = 0; i < count; ++i) {
    Hypergraph hg = testing::random_hypergraph(rng, 20 + static_cast<Index>(rng.below(21)), 15, 6);
    const Index d = 1 + static_cast<Index>(rng.below(3));
    NodeSignal x0 = testing::random_signal(rng, hg.node_count(), d);
    auto params = AttentionParams<double>::random(d, rng);
    runs.push_back({std::move(hg), std::move(x0), std::move(params)});
  }
  return runs;
}

enum class Mod { Uniform, SoftmaxFrozen, SoftmaxRecompute };

DiffusionSystem<double> system_for(const Operators<double>& ops, const Run& r, Mod mod) {
  if (mod == Mod::Uniform) return DiffusionSystem<double>(ops, uniform_modulation<double>(r.hg));
  const auto* hg = &r.hg;
  const auto params = r.params;
  return DiffusionSystem<double>(
      ops, [params, hg](const Signal<double>& x) { return softmax_modulation(params, x, *hg); },
      mod == Mod::SoftmaxFrozen ? ModulationPolicy::Frozen : ModulationPolicy::Recompute);
}

SolverSpec fixed(Scheme scheme, double tau, Index steps) {
  SolverSpec spec;
  spec.scheme = scheme;
  spec.tau = tau;
  spec.steps = steps;
  return spec;
}

Verdict criterion_4() {
  const auto runs = random_runs(401, 20);
  int gated = 0, gated_ok = 0, info = 0, info_ok = 0;
  double worst_flow = 0;
  for (const auto& r : runs) {
    Operators<double> ops(r.hg);
    for (Mod mod : {Mod::Uniform, Mod::SoftmaxFrozen, Mod::SoftmaxRecompute}) {
      for (double tau : {0.25, 0.5, 1.0}) {
        auto sys = system_for(ops, r, mod);
        const auto traj = integrate(sys, r.x0, fixed(Scheme::ExplicitEuler, tau, 100));
        const bool ok = energy_monotonicity(sys, traj).monotone;
        if (mod == Mod::SoftmaxRecompute) {
          ++info;
          info_ok += ok;
        } else {
          ++gated;
          gated_ok += ok;
        }
      }
      if (mod == Mod::SoftmaxRecompute) continue;
      auto sys = system_for(ops, r, mod);
      sys.begin(r.x0);
      const Eigen::VectorXd a = sys.weights(r.x0);
      const NodeSignal dir = rhs(ops, a, r.x0);
      const double h = 1e-5;
      const double derivative = (energy(ops, a, NodeSignal(r.x0 + h * dir)) - energy(ops, a, NodeSignal(r.x0 - h * dir))) / (2 * h);
      const double expected = -dir.squaredNorm();
      worst_flow = std::max(worst_flow, std::abs(derivative - expected) / std::abs(expected));
    }
  }
  Verdict v;
  v.pass = gated_ok == gated && worst_flow <= kGradientFlowTol;
  v.detail = "uniform+softmax(frozen) monotone " + std::to_string(gated_ok) + "/" + std::to_string(gated) +
             ", gradient-flow rel err " + fmt("%.2e", worst_flow) + "; info: softmax recomputed each step monotone " +
             std::to_string(info_ok) + "/" + std::to_string(info);
  return v;
}

Verdict criterion_5() {
  const auto runs = random_runs(401, 20);
  int gated = 0, gated_ok = 0;
  double worst = 0;
  for (const auto& r : runs) {
    Operators<double> ops(r.hg);
    for (Mod mod : {Mod::Uniform, Mod::SoftmaxFrozen, Mod::SoftmaxRecompute}) {
      auto check = [&](Scheme scheme, double tau, Index steps) {
        auto sys = system_for(ops, r, mod);
        const auto report = max_principle(integrate(sys, r.x0, fixed(scheme, tau, steps)), r.hg.degree_info());
        const bool ok = report.max_violation <= kBoundsTol;
        worst = std::max(worst, report.max_violation);
        ++gated;
        gated_ok += ok;
      };
      for (double tau : {0.25, 0.5, 1.0}) check(Scheme::ExplicitEuler, tau, 100);
      check(Scheme::ImplicitEuler, 10.0, 20);
    }
  }
  Verdict v;
  v.pass = gated_ok == gated;
  v.detail = "explicit tau<=1 and implicit tau=10, all modulations: within bounds " + std::to_string(gated_ok) +
             "/" + std::to_string(gated) + ", worst excess " + fmt("%.2e", worst);
  return v;
}

Verdict criterion_6() {
  const auto runs = random_runs(601, 20);
  int explicit_ok = 0, implicit_ok = 0, implicit_total = 0;
  for (const auto& r : runs) {
    Operators<double> ops(r.hg);
    auto non_increasing = [](const Trajectory<double>& traj) {
      for (std::size_t k = 1; k < traj.states.size(); ++k)
        if (traj.states[k].norm() > traj.states[k - 1].norm() * (1 + kNormSlack)) return false;
      return true;
    };
    auto sys = system_for(ops, r, Mod::SoftmaxFrozen);
    explicit_ok += non_increasing(integrate(sys, r.x0, fixed(Scheme::ExplicitEuler, 1.0, 200)));
    for (double tau : {1.0, 10.0, 100.0}) {
      auto isys = system_for(ops, r, Mod::SoftmaxFrozen);
      implicit_ok += non_increasing(integrate(isys, r.x0, fixed(Scheme::ImplicitEuler, tau, 20)));
      ++implicit_total;
    }
  }

  // Witness search over valid modulations: uniform and random normalized
  // weights (including near one-hot) on small hypergraphs and graphs.
  SplitMix64 rng(602);
  double best = 0;
  std::optional<std::pair<Hypergraph, Eigen::VectorXd>> witness;
  for (int trial = 0; trial < 1500; ++trial) {
    const Index n = 2 + static_cast<Index>(rng.below(11));
    const bool graph = trial % 2 == 0;
    const Hypergraph hg = testing::random_hypergraph(rng, n, 1 + static_cast<Index>(rng.below(12)), graph ? 2 : 5);
    const Dense G = scaled_gradient_matrix(hg).to_dense();
    const double scales[] = {0.0, 1.0, 5.0, 30.0};
    for (double scale : scales) {
      const Eigen::VectorXd a = scale == 0.0 ? uniform_modulation<double>(hg) : random_normalized(hg, rng, scale);
      const Dense M = G.transpose() * a.asDiagonal() * G;
      const double lambda = Eigen::SelfAdjointEigenSolver<Dense>(M).eigenvalues().maxCoeff();
      if (lambda > best) {
        best = lambda;
        witness.emplace(hg, a);
      }
    }
  }
  double growth = 0;
  if (witness) {
    Operators<double> ops(witness->first);
    const Dense G = scaled_gradient_matrix(witness->first).to_dense();
    const Dense M = G.transpose() * witness->second.asDiagonal() * G;
    Eigen::SelfAdjointEigenSolver<Dense> eig(M);
    const NodeSignal x0 = eig.eigenvectors().col(eig.eigenvectors().cols() - 1);
    DiffusionSystem<double> sys(ops, witness->second);
    const auto traj = integrate(sys, x0, fixed(Scheme::ExplicitEuler, kWitnessTau, 200));
    for (const auto& s : traj.states) growth = std::max(growth, s.norm() / x0.norm());
  }
  const bool witness_ok = best >= kWitnessLambda && growth >= kWitnessGrowth;
  Verdict v;
  v.pass = explicit_ok == 20 && implicit_ok == implicit_total && witness_ok;
  v.detail = "explicit tau=1 non-increasing " + std::to_string(explicit_ok) + "/20, implicit tau in {1,10,100} " +
             std::to_string(implicit_ok) + "/" + std::to_string(implicit_total) +
             "; witness: largest lambda_max found " + fmt("%.6f", best) + " (need >= 1.9), growth at tau=1.5 " +
             fmt("%.3g", growth) + "x (need >= 10)";
  return v;
}

Verdict criterion_7() {
  const auto start = std::chrono::steady_clock::now();
  const auto c = bundled_linear_case();
  const std::vector<double> taus{0.4, 0.2, 0.1, 0.05};
  const double rk4 = richardson_slope(convergence_study(c, Scheme::Rk4, taus));
  const double ab4 = richardson_slope(convergence_study(c, Scheme::Ab4, taus));
  const double euler = richardson_slope(convergence_study(c, Scheme::ExplicitEuler, taus));
  bool adaptive_ok = true;
  std::string adaptive;
  for (const auto& row : convergence_study(c, Scheme::Adaptive, {1e-4, 1e-6})) {
    adaptive_ok = adaptive_ok && row.error <= kAdaptiveFactor * row.tau;
    adaptive += " tol " + fmt("%.0e", row.tau) + " err " + fmt("%.2e", row.error) + " (" +
                std::to_string(row.accepted) + " acc/" + std::to_string(row.rejected) + " rej)";
  }
  const double secs = elapsed(start);
  Verdict v;
  v.pass = rk4 >= kRk4Slope && ab4 >= kAb4Slope && std::abs(euler - kEulerSlope) <= kEulerSlopeTol && adaptive_ok &&
           secs < 60.0;
  v.detail = "slopes rk4 " + fmt("%.3f", rk4) + ", ab4 " + fmt("%.3f", ab4) + ", euler " + fmt("%.3f", euler) +
             ";" + adaptive + "; " + fmt("%.1fs", secs);
  return v;
}

Verdict criterion_8() {
  const auto start = std::chrono::steady_clock::now();
  SplitMix64 rng(801);
  const Index n = 30;
  Hypergraph hg = testing::random_hypergraph(rng, n, 14, 5);
  NodeSignal x = testing::random_signal(rng, n, 4);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (auto& l : labels) l = static_cast<int>(rng.below(3));
  const Dataset data{std::move(hg), std::move(x), std::move(labels), 3};
  std::vector<char> mask(static_cast<std::size_t>(n), 0);
  for (Index i = 0; i < n; i += 2) mask[static_cast<std::size_t>(i)] = 1;
  double worst = 0, worst_abs = 0;
  Index checked = 0, failed = 0;
  for (Variant variant : {Variant::Linear, Variant::Nonlinear}) {
    SolverSpec spec = fixed(Scheme::ExplicitEuler, 1.0, 2);
    spec.modulation_policy = policy_of(variant);
    const ModelParams params = ModelParams::random(4, 6, 3, 802);
    ForwardOptions options;
    options.training = true;
    options.input_dropout = 0.2;
    options.dropout_seed = 803;
    const double decay = 5e-4;
    const Eigen::VectorXd g = loss_and_gradients(params, data, mask, spec, variant, decay, options).grads.flatten();
    const Eigen::VectorXd theta = params.flatten();
    ModelParams probe = params;
    for (Index i = 0; i < theta.size(); ++i) {
      Eigen::VectorXd t = theta;
      t[i] = theta[i] + kGradcheckStep;
      probe.assign(t);
      const double up = loss_and_gradients(probe, data, mask, spec, variant, decay, options).loss;
      t[i] = theta[i] - kGradcheckStep;
      probe.assign(t);
      const double down = loss_and_gradients(probe, data, mask, spec, variant, decay, options).loss;
      const double numeric = (up - down) / (2 * kGradcheckStep);
      const double diff = std::abs(numeric - g[i]);
      const double scale = std::max(std::abs(numeric), std::abs(g[i]));
      if (scale >= 1e-6) worst = std::max(worst, diff / scale);
      worst_abs = std::max(worst_abs, diff);
      failed += diff > std::max(kGradcheckRel * std::max(std::abs(numeric), std::abs(g[i])), kGradcheckFloor);
      ++checked;
    }
  }
  const double secs = elapsed(start);
  Verdict v;
  v.pass = failed == 0 && secs < 120.0;
  v.detail = std::to_string(checked) + " parameters (HND-L and HND-NL, 30 nodes, 2 layers): " +
             std::to_string(failed) + " mismatches, worst rel err " + fmt("%.2e", worst) + " (|g|>=1e-6), worst abs err " +
             fmt("%.2e", worst_abs) + ", " + fmt("%.1fs", secs);
  return v;
}

SbmParams desk_sbm(Index alpha) { return SbmParams{250, 100, 15, alpha, 32, 1.0, 0}; }

TrainConfig desk_config(Index layers) {
  TrainConfig c;
  c.tau = 1.0;
  c.horizon = static_cast<double>(layers);
  c.variant = Variant::Linear;
  c.split_count = 5;
  c.base_seed = 0;
  return c;
}

Verdict criterion_9() {
  const auto start = std::chrono::steady_clock::now();
  const Dataset a1 = generate_sbm(desk_sbm(1));
  const Dataset a7 = generate_sbm(desk_sbm(7));
  const double base = train_and_evaluate(a1, desk_config(0)).mean_test_accuracy;
  const double hnd1 = train_and_evaluate(a1, desk_config(4)).mean_test_accuracy;
  const double hnd7 = train_and_evaluate(a7, desk_config(4)).mean_test_accuracy;
  const double secs = elapsed(start);
  Verdict v;
  v.pass = hnd1 - base >= kAccuracyGain && hnd1 > hnd7 && secs < 600.0;
  v.detail = "alpha=1: HND-L " + fmt("%.4f", hnd1) + " vs L=0 " + fmt("%.4f", base) + " (gain " +
             fmt("%.2f", 100 * (hnd1 - base)) + " pt, need >= 2); alpha=7: HND-L " + fmt("%.4f", hnd7) + "; " +
             fmt("%.1fs", secs);
  return v;
}

Verdict criterion_10() {
  const Dataset data = generate_sbm(desk_sbm(1));
  TrainConfig c = desk_config(0);
  const auto reports = depth_sweep(data, c, {2, 4, 10, 30});
  bool finite = true;
  double violation = 0;
  std::string accs;
  for (const auto& r : reports) {
    for (const auto& s : r.splits) {
      finite = finite && s.finite;
      violation = std::max(violation, s.max_principle_violation);
    }
    accs += " " + r.label + " " + fmt("%.4f", r.mean_test_accuracy);
  }
  const double gap = reports.back().mean_test_accuracy - reports.front().mean_test_accuracy;
  Verdict v;
  v.pass = std::abs(gap) <= kDepthWindow && finite && violation <= kBoundsTol;
  v.detail = "accuracy" + accs + "; L=30 minus L=2 " + fmt("%+.2f", 100 * gap) + " pt (need within 5); finite " +
             (finite ? "yes" : "no") + ", max-principle excess " + fmt("%.2e", violation);
  return v;
}

int run_cli(const std::string& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir + "' && '" + std::string(HND_CLI_PATH) + "' " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict criterion_11() {
  const fs::path dir = fs::temp_directory_path() / "hnd_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "h0.txt") << "3 2\n1 2 0 1\n1 3 0 1 2\n";
  std::ofstream(dir / "c.json")
      << R"({"sbm": {"nodes_per_class": 30, "edge_count": 20, "edge_size": 6, "feature_dim": 4},
             "epochs": 5, "splits": 2, "hidden_dim": 8, "input_dropout": 0.2, "seed": 11})";
  std::ofstream(dir / "d.json") << R"({"initial": [[1], [0], [0]], "horizon": 8})";
  const std::vector<std::string> commands{
      "validate h0.txt > {out}.validate.txt",
      "sbm --config c.json --out {out}",
      "diffuse --config c.json --out {out}",
      "diffuse h0.txt --config d.json --scheme adaptive --out {out}/adaptive",
      "diffuse h0.txt --config d.json --scheme implicit --tau 4 --out {out}/implicit",
      "train --config c.json --out {out}",
      "train --config c.json --variant nl --layers 0,2 --out {out}/depth",
      "bench-noise --config c.json --noise mask --rates 0,0.3 --out {out}",
      "bench-solver --out {out}",
      "spectrum --config c.json --out {out}",
  };
  int failures = 0;
  for (const char* out : {"a", "b"}) {
    for (std::string cmd : commands) {
      for (std::size_t p; (p = cmd.find("{out}")) != std::string::npos;) cmd.replace(p, 5, out);
      if (cmd.rfind("validate", 0) == 0) {
        const std::string full = "cd '" + dir.string() + "' && '" + std::string(HND_CLI_PATH) + "' " + cmd;
        failures += std::system(full.c_str()) != 0;
      } else {
        failures += run_cli(dir.string(), cmd) != 0;
      }
    }
  }
  int compared = 0, differing = 0;
  std::vector<fs::path> files{"a.validate.txt"};
  for (const auto& entry : fs::recursive_directory_iterator(dir / "a"))
    if (entry.is_regular_file()) files.push_back(fs::relative(entry.path(), dir / "a"));
  for (const auto& rel : files) {
    if (rel.string().find("timing") != std::string::npos) continue;
    const fs::path a = rel == "a.validate.txt" ? dir / rel : dir / "a" / rel;
    const fs::path b = rel == "a.validate.txt" ? dir / "b.validate.txt" : dir / "b" / rel;
    ++compared;
    differing += slurp(a) != slurp(b);
  }
  fs::remove_all(dir);
  Verdict v;
  v.pass = failures == 0 && differing == 0 && compared >= 15;
  v.detail = std::to_string(commands.size()) + " commands run twice, " + std::to_string(failures) +
             " failed runs; " + std::to_string(compared) + " output bodies compared, " + std::to_string(differing) +
             " differ";
  return v;
}

struct Criterion {
  int id;
  const char* name;
  std::function<Verdict()> fn;
};

}  // namespace
}  // namespace hnd

int main(int argc, char** argv) {
  using namespace hnd;
  CLI::App app{"Acceptance criteria"};
  std::vector<int> selected;
  app.add_option("--criterion", selected, "criterion number(s) to run; default all");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> all{
      {1, "operator identities", criterion_1},   {2, "null space", criterion_2},
      {3, "modulation contract", criterion_3},   {4, "energy dissipation", criterion_4},
      {5, "maximum principle", criterion_5},     {6, "stability", criterion_6},
      {7, "integrator orders", criterion_7},     {8, "gradcheck", criterion_8},
      {9, "desk-scale heterophily", criterion_9}, {10, "depth stability", criterion_10},
      {11, "determinism", criterion_11},
  };
  int failed = 0;
  for (const auto& c : all) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
    Verdict v;
    try {
      v = c.fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %d %s: %s | %s\n", c.id, c.name, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
    failed += !v.pass;
  }
  return failed == 0 ? 0 : 1;
}
