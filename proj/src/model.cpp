#include "hnd/model.hpp"

#include "hnd/rng.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <istream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

namespace hnd {

Variant parse_variant(std::string_view name) {
  if (name == "l" || name == "L" || name == "hnd-l" || name == "linear") return Variant::Linear;
  if (name == "nl" || name == "NL" || name == "hnd-nl" || name == "nonlinear") return Variant::Nonlinear;
  throw Error(ErrorKind::InvalidConfig, "unknown variant '" + std::string(name) + "'");
}

std::string_view to_string(Variant v) { return v == Variant::Linear ? "l" : "nl"; }

// --- parameters ------------------------------------------------------------------

ModelParams ModelParams::zeros(Index d_in, Index d, Index classes) {
  ModelParams p;
  p.w_in = Eigen::MatrixXd::Zero(d_in, d);
  p.attention = AttentionParams<double>::zeros(d);
  p.w_out = Eigen::MatrixXd::Zero(d, classes);
  return p;
}

ModelParams ModelParams::random(Index d_in, Index d, Index classes, std::uint64_t seed) {
  SplitMix64 rng(seed);
  ModelParams p;
  const auto fill = [&](Eigen::MatrixXd& m, Index fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(fan_in, 1)));
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-bound, bound);
  };
  p.w_in.resize(d_in, d);
  fill(p.w_in, d_in);
  p.attention = AttentionParams<double>::random(d, rng);
  p.w_out.resize(d, classes);
  fill(p.w_out, d);
  return p;
}

Index ModelParams::parameter_count() const {
  Index total = 0;
  for_each_block([&](const auto& m) { total += m.size(); });
  return total;
}

Eigen::VectorXd ModelParams::flatten() const {
  Eigen::VectorXd flat(parameter_count());
  Index offset = 0;
  for_each_block([&](const auto& m) {
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) flat[offset++] = m(r, c);
  });
  return flat;
}

void ModelParams::assign(const Eigen::VectorXd& flat) {
  if (flat.size() != parameter_count()) throw Error(ErrorKind::ShapeMismatch, "flat parameter length");
  Index offset = 0;
  for_each_block([&](auto& m) {
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) m(r, c) = flat[offset++];
  });
}

// --- configuration ---------------------------------------------------------------

Index TrainConfig::layers() const { return static_cast<Index>(std::llround(horizon / tau)); }

SolverSpec TrainConfig::solver_spec() const {
  SolverSpec spec;
  spec.scheme = scheme;
  spec.tau = tau;
  spec.steps = layers();
  spec.modulation_policy = policy_of(variant);
  return spec;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw Error(ErrorKind::InvalidConfig, "lr must be positive");
  if (!(weight_decay >= 0.0)) throw Error(ErrorKind::InvalidConfig, "weight_decay must be non-negative");
  if (!(input_dropout >= 0.0 && input_dropout < 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "input_dropout must lie in [0, 1)");
  }
  if (hidden_dim < 1) throw Error(ErrorKind::InvalidConfig, "hidden_dim must be positive");
  if (!(tau > 0.0)) throw Error(ErrorKind::InvalidConfig, "tau must be positive");
  if (!(horizon >= 0.0)) throw Error(ErrorKind::InvalidConfig, "horizon must be non-negative");
  if (std::abs(static_cast<double>(layers()) * tau - horizon) > 1e-9 * std::max(1.0, horizon)) {
    throw Error(ErrorKind::InvalidConfig, "horizon must be an integer multiple of tau");
  }
  if (epochs < 1) throw Error(ErrorKind::InvalidConfig, "epochs must be at least 1");
  if (split_count < 1) throw Error(ErrorKind::InvalidConfig, "split_count must be at least 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && eps > 0.0)) {
    throw Error(ErrorKind::InvalidConfig, "invalid Adam constants");
  }
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0 || std::abs(sum - 1.0) > 1e-9) {
    throw Error(ErrorKind::InvalidRatios, "ratios must be non-negative and sum to 1");
  }
}

nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["lr"] = c.lr;
  j["weight_decay"] = c.weight_decay;
  j["input_dropout"] = c.input_dropout;
  j["hidden_dim"] = c.hidden_dim;
  j["horizon"] = c.horizon;
  j["tau"] = c.tau;
  j["variant"] = std::string(to_string(c.variant));
  j["scheme"] = std::string(to_string(c.scheme));
  j["epochs"] = c.epochs;
  j["base_seed"] = c.base_seed;
  j["split_count"] = c.split_count;
  j["ratios"] = c.ratios;
  j["aggregator"] = c.aggregator == Aggregator::Mean ? "mean" : "max";
  j["betas"] = {c.beta1, c.beta2};
  j["eps"] = c.eps;
  return j;
}

// --- splits ----------------------------------------------------------------------

std::vector<Index> SplitMasks::indices(const std::vector<char>& mask) {
  std::vector<Index> out;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) out.push_back(static_cast<Index>(i));
  return out;
}

std::vector<SplitMasks> make_splits(Index n, const std::array<double, 3>& ratios, std::uint64_t base_seed, int k) {
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0 || std::abs(sum - 1.0) > 1e-9) {
    throw Error(ErrorKind::InvalidRatios, "ratios must be non-negative and sum to 1");
  }
  if (k < 1) throw Error(ErrorKind::InvalidConfig, "split count must be at least 1");
  if (n < 1) throw Error(ErrorKind::InvalidConfig, "node count must be positive");
  std::array<Index, 3> sizes{};
  Index assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    sizes[i] = static_cast<Index>(std::floor(ratios[i] * static_cast<double>(n)));
    assigned += sizes[i];
  }
  for (std::size_t i = 0; assigned < n; i = (i + 1) % 3) {
    if (ratios[i] > 0.0) {
      ++sizes[i];
      ++assigned;
    }
  }
  std::vector<SplitMasks> splits;
  for (int s = 0; s < k; ++s) {
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    SplitMix64 rng(base_seed + static_cast<std::uint64_t>(s));
    rng.shuffle(perm.begin(), perm.end());
    SplitMasks m;
    m.train.assign(static_cast<std::size_t>(n), 0);
    m.val.assign(static_cast<std::size_t>(n), 0);
    m.test.assign(static_cast<std::size_t>(n), 0);
    for (Index i = 0; i < n; ++i) {
      const auto v = static_cast<std::size_t>(perm[static_cast<std::size_t>(i)]);
      if (i < sizes[0]) {
        m.train[v] = 1;
      } else if (i < sizes[0] + sizes[1]) {
        m.val[v] = 1;
      } else {
        m.test[v] = 1;
      }
    }
    splits.push_back(std::move(m));
  }
  return splits;
}

// --- forward ---------------------------------------------------------------------

NodeSignal apply_dropout(const NodeSignal& x, double rate, std::uint64_t seed) {
  if (rate <= 0.0) return x;
  SplitMix64 rng(derive_seed(seed, 0xd209));
  const double scale = 1.0 / (1.0 - rate);
  NodeSignal out(x.rows(), x.cols());
  for (Index i = 0; i < x.size(); ++i) out.data()[i] = rng.bernoulli(rate) ? 0.0 : x.data()[i] * scale;
  return out;
}

namespace {

void check_shapes(const ModelParams& params, const Dataset& data) {
  if (data.features.rows() != data.hypergraph.node_count() || data.features.cols() != params.input_dim()) {
    throw Error(ErrorKind::ShapeMismatch, "features do not match the encoder");
  }
  if (params.attention.dim() != params.hidden_dim()) {
    throw Error(ErrorKind::ShapeMismatch, "attention width differs from hidden width");
  }
  if (params.w_out.rows() != params.hidden_dim()) throw Error(ErrorKind::ShapeMismatch, "decoder rows");
}

NodeSignal encode(const ModelParams& params, const Dataset& data, const ForwardOptions& options, NodeSignal* input) {
  NodeSignal x = options.training ? apply_dropout(data.features, options.input_dropout, options.dropout_seed)
                                  : data.features;
  NodeSignal x0 = x * params.w_in;
  if (input) *input = std::move(x);
  return x0;
}

ModulationFn<double> modulation_of(const ModelParams& params, const Hypergraph& hg, Aggregator agg) {
  return [&params, &hg, agg](const NodeSignal& x) { return softmax_modulation(params.attention, x, hg, agg); };
}

/// Explicit-Euler forward keeping everything the reverse pass needs.
struct Tape {
  NodeSignal input;
  std::vector<NodeSignal> states;
  std::vector<ScoreCache<double>> caches;  // one per layer (NL) or one at X(0) (L)
  std::vector<Eigen::VectorXd> weights;
  NodeSignal logits;
};

Tape record(const ModelParams& params, const Dataset& data, const Operators<double>& ops, Index layers, double tau,
            Variant variant, const ForwardOptions& options) {
  const Hypergraph& hg = data.hypergraph;
  Tape tape;
  tape.states.push_back(encode(params, data, options, &tape.input));
  for (Index l = 0; l < layers; ++l) {
    const NodeSignal& x = tape.states.back();
    if (variant == Variant::Nonlinear || l == 0) {
      tape.caches.push_back(similarity_forward(params.attention, x, hg, options.aggregator));
      tape.weights.push_back(normalize_modulation(tape.caches.back().scores, hg));
    }
    const Eigen::VectorXd& a = tape.weights.back();
    tape.states.push_back(x - tau * ops.apply(a, x));
  }
  tape.logits = tape.states.back() * params.w_out;
  return tape;
}

/// Row-wise softmax with max shift.
NodeSignal softmax_rows(const NodeSignal& logits) {
  NodeSignal p(logits.rows(), logits.cols());
  for (Index r = 0; r < logits.rows(); ++r) {
    const double shift = logits.row(r).maxCoeff();
    p.row(r) = (logits.row(r).array() - shift).exp();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

}  // namespace

Trajectory<double> hidden_trajectory(const ModelParams& params, const Dataset& data, const SolverSpec& spec,
                                     Variant variant, const ForwardOptions& options) {
  check_shapes(params, data);
  Operators<double> ops(data.hypergraph);
  DiffusionSystem<double> sys(ops, modulation_of(params, data.hypergraph, options.aggregator), policy_of(variant));
  return integrate(sys, encode(params, data, options, nullptr), spec);
}

NodeSignal forward(const ModelParams& params, const Dataset& data, const SolverSpec& spec, Variant variant,
                   const ForwardOptions& options) {
  const auto traj = hidden_trajectory(params, data, spec, variant, options);
  return traj.final_state() * params.w_out;
}

double cross_entropy(const NodeSignal& logits, const std::vector<int>& labels, const std::vector<char>& mask) {
  double total = 0.0;
  long count = 0;
  for (Index r = 0; r < logits.rows(); ++r) {
    if (!mask[static_cast<std::size_t>(r)]) continue;
    const double shift = logits.row(r).maxCoeff();
    const double lse = shift + std::log((logits.row(r).array() - shift).exp().sum());
    total += lse - logits(r, labels[static_cast<std::size_t>(r)]);
    ++count;
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

double accuracy(const NodeSignal& logits, const std::vector<int>& labels, const std::vector<char>& mask) {
  long hits = 0;
  long count = 0;
  for (Index r = 0; r < logits.rows(); ++r) {
    if (!mask[static_cast<std::size_t>(r)]) continue;
    Index best = 0;
    for (Index c = 1; c < logits.cols(); ++c)
      if (logits(r, c) > logits(r, best)) best = c;
    hits += best == labels[static_cast<std::size_t>(r)];
    ++count;
  }
  return count ? static_cast<double>(hits) / static_cast<double>(count) : 0.0;
}

LossAndGradients loss_and_gradients(const ModelParams& params, const Dataset& data, const std::vector<char>& train_mask,
                                    const SolverSpec& spec, Variant variant, double weight_decay,
                                    const ForwardOptions& options) {
  if (spec.scheme != Scheme::ExplicitEuler) {
    throw Error(ErrorKind::UnsupportedSchemeForTraining,
                "only explicit_euler is trainable, got " + std::string(to_string(spec.scheme)));
  }
  check_shapes(params, data);
  if (!data.has_labels()) throw Error(ErrorKind::ShapeMismatch, "training needs labels");
  if (static_cast<Index>(train_mask.size()) != data.hypergraph.node_count()) {
    throw Error(ErrorKind::ShapeMismatch, "train mask length");
  }
  const Hypergraph& hg = data.hypergraph;
  const Operators<double> ops(hg);
  const Index layers = spec.steps;
  const double tau = spec.tau;
  const Tape tape = record(params, data, ops, layers, tau, variant, options);

  LossAndGradients out;
  out.grads = ModelParams::zeros(params.input_dim(), params.hidden_dim(), params.class_count());
  out.loss = cross_entropy(tape.logits, data.labels, train_mask);

  const auto count = static_cast<double>(std::count(train_mask.begin(), train_mask.end(), char{1}));
  NodeSignal d_logits = NodeSignal::Zero(tape.logits.rows(), tape.logits.cols());
  if (count > 0) {
    const NodeSignal prob = softmax_rows(tape.logits);
    for (Index r = 0; r < d_logits.rows(); ++r) {
      if (!train_mask[static_cast<std::size_t>(r)]) continue;
      d_logits.row(r) = prob.row(r) / count;
      d_logits(r, data.labels[static_cast<std::size_t>(r)]) -= 1.0 / count;
    }
  }
  out.grads.w_out = tape.states.back().transpose() * d_logits;
  NodeSignal dx = d_logits * params.w_out.transpose();

  Eigen::VectorXd da_frozen = Eigen::VectorXd::Zero(hg.pair_count());
  for (Index l = layers - 1; l >= 0; --l) {
    const auto lu = static_cast<std::size_t>(l);
    const NodeSignal& x = tape.states[lu];
    const std::size_t w = variant == Variant::Nonlinear ? lu : 0;
    const Eigen::VectorXd& a = tape.weights[w];
    const NodeSignal g_dx = ops.gradient(dx);
    const NodeSignal g_x = ops.gradient(x);
    const Eigen::VectorXd da = -tau * g_dx.cwiseProduct(g_x).rowwise().sum();
    NodeSignal next = dx - tau * ops.gradient_transpose(a.asDiagonal() * g_dx);
    if (variant == Variant::Nonlinear) {
      const Eigen::VectorXd ds = normalize_modulation_backward(a, da, hg);
      next += similarity_backward(params.attention, x, hg, options.aggregator, tape.caches[lu], ds,
                                  out.grads.attention);
    } else {
      da_frozen += da;
    }
    dx = std::move(next);
  }
  if (variant == Variant::Linear && layers > 0) {
    const Eigen::VectorXd ds = normalize_modulation_backward(tape.weights[0], da_frozen, hg);
    dx += similarity_backward(params.attention, tape.states[0], hg, options.aggregator, tape.caches[0], ds,
                              out.grads.attention);
  }
  out.grads.w_in = tape.input.transpose() * dx;

  if (weight_decay > 0.0) {
    const Eigen::VectorXd theta = params.flatten();
    out.loss += 0.5 * weight_decay * theta.squaredNorm();
    out.grads.assign(out.grads.flatten() + weight_decay * theta);
  }
  return out;
}

// --- optimizer -------------------------------------------------------------------

AdamState adam_init(const ModelParams& params) {
  AdamState s;
  s.m = Eigen::VectorXd::Zero(params.parameter_count());
  s.v = Eigen::VectorXd::Zero(params.parameter_count());
  return s;
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr, double beta1,
               double beta2, double eps, double weight_decay) {
  Eigen::VectorXd theta = params.flatten();
  Eigen::VectorXd g = grads.flatten();
  if (g.size() != theta.size() || state.m.size() != theta.size() || state.v.size() != theta.size()) {
    throw Error(ErrorKind::ShapeMismatch, "optimizer state does not match parameters");
  }
  if (weight_decay != 0.0) g += weight_decay * theta;
  ++state.step;
  state.m = beta1 * state.m + (1.0 - beta1) * g;
  state.v = beta2 * state.v + (1.0 - beta2) * g.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (Index i = 0; i < theta.size(); ++i) {
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    theta[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
  params.assign(theta);
}

// --- protocol --------------------------------------------------------------------

namespace {

SplitResult run_split(const Dataset& data, const TrainConfig& config, const SplitMasks& masks, int split) {
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t split_seed = config.base_seed + static_cast<std::uint64_t>(split);
  const SolverSpec spec = config.solver_spec();
  ModelParams params = ModelParams::random(data.features.cols(), config.hidden_dim, data.class_count,
                                           derive_seed(split_seed, 0x1417));
  AdamState state = adam_init(params);
  ModelParams best = params;
  SplitResult result;
  result.split = split;
  double best_val = -1.0;
  ForwardOptions train_opts;
  train_opts.training = true;
  train_opts.input_dropout = config.input_dropout;
  train_opts.aggregator = config.aggregator;
  ForwardOptions eval_opts;
  eval_opts.aggregator = config.aggregator;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    train_opts.dropout_seed = derive_seed(derive_seed(split_seed, 0xd20), static_cast<std::uint64_t>(epoch));
    const auto lg = loss_and_gradients(params, data, masks.train, spec, config.variant, config.weight_decay, train_opts);
    result.losses.push_back(lg.loss);
    adam_step(params, lg.grads, state, config.lr, config.beta1, config.beta2, config.eps, 0.0);
    const NodeSignal logits = forward(params, data, spec, config.variant, eval_opts);
    const double val = accuracy(logits, data.labels, masks.val);
    if (val > best_val) {
      best_val = val;
      best = params;
      result.best_epoch = epoch;
    }
  }
  const auto traj = hidden_trajectory(best, data, spec, config.variant, eval_opts);
  const NodeSignal logits = traj.final_state() * best.w_out;
  result.train_accuracy = accuracy(logits, data.labels, masks.train);
  result.val_accuracy = accuracy(logits, data.labels, masks.val);
  result.test_accuracy = accuracy(logits, data.labels, masks.test);
  result.finite = logits.allFinite();
  for (const auto& s : traj.states) result.finite = result.finite && s.allFinite();
  result.max_principle_violation = max_principle(traj, data.hypergraph.degree_info()).max_violation;
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace

MetricsReport train_and_evaluate(const Dataset& data, const TrainConfig& config) {
  config.validate();
  if (!data.has_labels() || data.class_count < 1) throw Error(ErrorKind::InvalidConfig, "dataset has no labels");
  if (config.scheme != Scheme::ExplicitEuler) {
    throw Error(ErrorKind::UnsupportedSchemeForTraining, "only explicit_euler is trainable");
  }
  const auto splits = make_splits(data.hypergraph.node_count(), config.ratios, config.base_seed, config.split_count);
  MetricsReport report;
  report.config = config;
  report.splits.resize(splits.size());
  parallel_for(splits.size(), [&](std::size_t i) {
    report.splits[i] = run_split(data, config, splits[i], static_cast<int>(i));
  });
  double sum = 0.0;
  for (const auto& s : report.splits) sum += s.test_accuracy;
  const double k = static_cast<double>(report.splits.size());
  report.mean_test_accuracy = sum / k;
  double sq = 0.0;
  for (const auto& s : report.splits) sq += (s.test_accuracy - report.mean_test_accuracy) * (s.test_accuracy - report.mean_test_accuracy);
  report.std_test_accuracy = report.splits.size() > 1 ? std::sqrt(sq / (k - 1.0)) : 0.0;
  return report;
}

std::vector<MetricsReport> depth_sweep(const Dataset& data, const TrainConfig& config,
                                       const std::vector<Index>& layer_counts) {
  if (config.scheme != Scheme::ExplicitEuler) {
    throw Error(ErrorKind::UnsupportedSchemeForTraining, "depth sweeps need explicit_euler");
  }
  std::vector<MetricsReport> out;
  for (Index layers : layer_counts) {
    if (layers < 0) throw Error(ErrorKind::InvalidConfig, "layer count must be non-negative");
    TrainConfig c = config;
    c.horizon = static_cast<double>(layers) * c.tau;
    MetricsReport r = train_and_evaluate(data, c);
    r.label = "L=" + std::to_string(layers);
    out.push_back(std::move(r));
  }
  return out;
}

NoiseKind parse_noise_kind(std::string_view name) {
  if (name == "gaussian") return NoiseKind::Gaussian;
  if (name == "uniform") return NoiseKind::Uniform;
  if (name == "mask") return NoiseKind::Mask;
  if (name == "structure") return NoiseKind::Structure;
  throw Error(ErrorKind::InvalidConfig, "unknown noise kind '" + std::string(name) + "'");
}

std::string_view to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::Gaussian: return "gaussian";
    case NoiseKind::Uniform: return "uniform";
    case NoiseKind::Mask: return "mask";
    case NoiseKind::Structure: return "structure";
  }
  return "unknown";
}

Dataset perturb_dataset(const Dataset& data, NoiseKind kind, double rate, std::uint64_t seed) {
  if (kind != NoiseKind::Structure) {
    const FeatureNoise f = kind == NoiseKind::Gaussian  ? FeatureNoise::Gaussian
                           : kind == NoiseKind::Uniform ? FeatureNoise::Uniform
                                                        : FeatureNoise::Mask;
    return Dataset{data.hypergraph, perturb_features(data.features, f, rate, seed), data.labels, data.class_count};
  }
  constexpr int kAttempts = 16;
  for (int attempt = 0;; ++attempt) {
    try {
      return Dataset{perturb_structure(data.hypergraph, rate, derive_seed(seed, static_cast<std::uint64_t>(attempt))),
                     data.features, data.labels, data.class_count};
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::ResultingIsolatedNode || attempt + 1 == kAttempts) throw;
    }
  }
}

std::vector<MetricsReport> noise_sweep(const Dataset& data, const TrainConfig& config, NoiseKind kind,
                                       const std::vector<double>& rates) {
  std::vector<MetricsReport> out;
  for (double rate : rates) {
    const Dataset noisy = perturb_dataset(data, kind, rate, derive_seed(config.base_seed, 0x9015e));
    MetricsReport r = train_and_evaluate(noisy, config);
    r.label = std::string(to_string(kind)) + "@" + format_double(rate);
    out.push_back(std::move(r));
  }
  return out;
}

nlohmann::json to_json(const MetricsReport& report, bool include_timing) {
  nlohmann::json j;
  j["label"] = report.label;
  j["config"] = to_json(report.config);
  nlohmann::json splits = nlohmann::json::array();
  for (const auto& s : report.splits) {
    nlohmann::json e;
    e["split"] = s.split;
    e["train_accuracy"] = s.train_accuracy;
    e["val_accuracy"] = s.val_accuracy;
    e["test_accuracy"] = s.test_accuracy;
    e["best_epoch"] = s.best_epoch;
    e["final_loss"] = s.losses.empty() ? 0.0 : s.losses.back();
    e["losses"] = s.losses;
    e["finite"] = s.finite;
    e["max_principle_violation"] = s.max_principle_violation;
    if (include_timing) e["wall_seconds"] = s.wall_seconds;
    splits.push_back(std::move(e));
  }
  j["splits"] = std::move(splits);
  j["mean_test_accuracy"] = report.mean_test_accuracy;
  j["std_test_accuracy"] = report.std_test_accuracy;
  return j;
}

// --- checkpoints -----------------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[8] = {'H', 'N', 'D', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void write_raw(std::ostream& os, const T& value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw Error(ErrorKind::MalformedDocument, "truncated checkpoint");
  return value;
}

}  // namespace

void save_checkpoint(std::ostream& os, const ModelParams& params) {
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_raw(os, kCheckpointVersion);
  write_raw(os, static_cast<std::uint64_t>(params.input_dim()));
  write_raw(os, static_cast<std::uint64_t>(params.hidden_dim()));
  write_raw(os, static_cast<std::uint64_t>(params.class_count()));
  write_raw(os, params.attention.leaky_slope);
  params.for_each_block([&](const auto& m) {
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) write_raw(os, static_cast<double>(m(r, c)));
  });
  if (!os) throw Error(ErrorKind::Io, "checkpoint write failed");
}

ModelParams load_checkpoint(std::istream& is) {
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw Error(ErrorKind::MalformedDocument, "not a checkpoint");
  }
  if (read_raw<std::uint32_t>(is) != kCheckpointVersion) {
    throw Error(ErrorKind::MalformedDocument, "unsupported checkpoint version");
  }
  const auto d_in = static_cast<Index>(read_raw<std::uint64_t>(is));
  const auto d = static_cast<Index>(read_raw<std::uint64_t>(is));
  const auto classes = static_cast<Index>(read_raw<std::uint64_t>(is));
  ModelParams params = ModelParams::zeros(d_in, d, classes);
  params.attention.leaky_slope = read_raw<double>(is);
  params.for_each_block([&](auto& m) {
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) m(r, c) = read_raw<double>(is);
  });
  return params;
}

// --- workers ---------------------------------------------------------------------

int worker_count() {
  const char* env = std::getenv("HND_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long value = std::strtol(env, &end, 10);
  if (*end != '\0' || value < 1) return 1;
  return static_cast<int>(std::min<long>(value, 256));
}

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(worker_count()), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex guard;
  std::size_t failed_index = count;
  std::exception_ptr failure;
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(guard);
          if (i < failed_index) {
            failed_index = i;
            failure = std::current_exception();
          }
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace hnd
