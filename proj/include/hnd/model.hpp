#pragma once

// Encoder -> explicit diffusion layers -> decoder, reverse-mode gradients,
// Adam, and the split / sweep protocol.

#include "hnd/diagnostics.hpp"
#include "hnd/error.hpp"
#include "hnd/hypergraph.hpp"
#include "hnd/modulation.hpp"
#include "hnd/solvers.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace hnd {

enum class Variant { Linear, Nonlinear };  // HND-L, HND-NL

Variant parse_variant(std::string_view name);
std::string_view to_string(Variant v);

inline ModulationPolicy policy_of(Variant v) {
  return v == Variant::Linear ? ModulationPolicy::Frozen : ModulationPolicy::Recompute;
}

struct ModelParams {
  Eigen::MatrixXd w_in;  // d_in x d
  AttentionParams<double> attention;
  Eigen::MatrixXd w_out;  // d x C

  Index input_dim() const noexcept { return w_in.rows(); }
  Index hidden_dim() const noexcept { return w_in.cols(); }
  Index class_count() const noexcept { return w_out.cols(); }

  static ModelParams zeros(Index d_in, Index d, Index classes);
  /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per block.
  static ModelParams random(Index d_in, Index d, Index classes, std::uint64_t seed);

  /// Blocks in checkpoint order: w_in, attention (projection, hidden weight,
  /// hidden bias, output weight, output bias), w_out.
  template <typename F>
  void for_each_block(F&& f) {
    f(w_in);
    attention.for_each_block(f);
    f(w_out);
  }
  template <typename F>
  void for_each_block(F&& f) const {
    f(w_in);
    attention.for_each_block(f);
    f(w_out);
  }

  Index parameter_count() const;
  Eigen::VectorXd flatten() const;
  void assign(const Eigen::VectorXd& flat);
};

struct TrainConfig {
  double lr = 0.01;
  double weight_decay = 5e-4;
  double input_dropout = 0.0;
  Index hidden_dim = 64;
  double horizon = 4.0;
  double tau = 1.0;
  Variant variant = Variant::Linear;
  Scheme scheme = Scheme::ExplicitEuler;
  int epochs = 200;
  std::uint64_t base_seed = 0;
  int split_count = 5;
  std::array<double, 3> ratios{0.5, 0.25, 0.25};
  Aggregator aggregator = Aggregator::Mean;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  /// L = T / tau, rounded to the nearest integer.
  Index layers() const;
  SolverSpec solver_spec() const;
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);

struct SplitMasks {
  std::vector<char> train;
  std::vector<char> val;
  std::vector<char> test;

  static std::vector<Index> indices(const std::vector<char>& mask);
};

/// Split i shuffles 0..n-1 with seed base_seed + i and cuts it by ratios.
/// Sizes are floored, then the remainder goes one each to train, val, test.
std::vector<SplitMasks> make_splits(Index n, const std::array<double, 3>& ratios, std::uint64_t base_seed, int k);

struct ForwardOptions {
  bool training = false;
  double input_dropout = 0.0;
  std::uint64_t dropout_seed = 0;
  Aggregator aggregator = Aggregator::Mean;
};

/// Inverted dropout with keep probability 1 - rate.
NodeSignal apply_dropout(const NodeSignal& x, double rate, std::uint64_t seed);

/// Logits n x C. X(0) = dropout(X_in) W_in, integrated under `spec` with the
/// variant's modulation policy, then X(T) W_out.
NodeSignal forward(const ModelParams& params, const Dataset& data, const SolverSpec& spec, Variant variant,
                   const ForwardOptions& options = {});

/// Hidden-state trajectory of the forward pass (no decoder).
Trajectory<double> hidden_trajectory(const ModelParams& params, const Dataset& data, const SolverSpec& spec,
                                     Variant variant, const ForwardOptions& options = {});

struct LossAndGradients {
  double loss = 0.0;
  ModelParams grads;
};

/// Mean cross-entropy over the train mask + weight_decay * 1/2 ||params||^2,
/// differentiated through decoder, every layer, the modulation path and the
/// encoder. Only explicit Euler is trainable.
LossAndGradients loss_and_gradients(const ModelParams& params, const Dataset& data, const std::vector<char>& train_mask,
                                    const SolverSpec& spec, Variant variant, double weight_decay,
                                    const ForwardOptions& options = {});

double cross_entropy(const NodeSignal& logits, const std::vector<int>& labels, const std::vector<char>& mask);
double accuracy(const NodeSignal& logits, const std::vector<int>& labels, const std::vector<char>& mask);

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;
};

AdamState adam_init(const ModelParams& params);

/// Bias-corrected Adam. weight_decay * params is added to the gradient.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr, double beta1,
               double beta2, double eps, double weight_decay);

struct SplitResult {
  int split = 0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
  int best_epoch = 0;
  std::vector<double> losses;
  bool finite = true;
  double max_principle_violation = 0.0;
  double wall_seconds = 0.0;
};

struct MetricsReport {
  TrainConfig config;
  std::string label;
  std::vector<SplitResult> splits;
  double mean_test_accuracy = 0.0;
  double std_test_accuracy = 0.0;  // sample standard deviation
};

/// Trains each split from its own seeded initialization and reports test
/// accuracy at the epoch of best validation accuracy (earliest on ties).
MetricsReport train_and_evaluate(const Dataset& data, const TrainConfig& config);

/// One report per L, with T = L * tau. Explicit Euler only.
std::vector<MetricsReport> depth_sweep(const Dataset& data, const TrainConfig& config,
                                       const std::vector<Index>& layer_counts);

enum class NoiseKind { Gaussian, Uniform, Mask, Structure };
NoiseKind parse_noise_kind(std::string_view name);
std::string_view to_string(NoiseKind kind);

/// Applies the perturbation at each rate (seeded from base_seed) and trains.
Dataset perturb_dataset(const Dataset& data, NoiseKind kind, double rate, std::uint64_t seed);
std::vector<MetricsReport> noise_sweep(const Dataset& data, const TrainConfig& config, NoiseKind kind,
                                       const std::vector<double>& rates);

nlohmann::json to_json(const MetricsReport& report, bool include_timing = false);

/// Binary checkpoint: "HNDCKPT1", uint32 version, uint64 d_in, d, C, f64
/// leaky slope, then every block row-major as f64 in for_each_block order.
void save_checkpoint(std::ostream& os, const ModelParams& params);
ModelParams load_checkpoint(std::istream& is);

/// Worker count from HND_THREADS (unset or invalid: 1).
int worker_count();

/// Runs fn(i) for i in [0, count) on up to worker_count() threads. Results
/// must be written to per-index slots. The first exception is rethrown.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace hnd
