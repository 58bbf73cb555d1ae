#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace hnd {

using Index = Eigen::Index;

/// Row-major dense signal over nodes (n x d) or hyperedge-node pairs (N x d).
template <typename Scalar>
using Signal = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using NodeSignal = Signal<double>;
using PairSignal = Signal<double>;

struct Pair {
  Index edge;
  Index node;
  friend bool operator==(const Pair&, const Pair&) = default;
};

/// Enumeration of the hyperedge-node pairs: edges in input order, nodes
/// ascending inside each edge. `edge_offsets[e]..edge_offsets[e+1]` is the
/// block of edge e; `node_pairs[node_offsets[v]..node_offsets[v+1]]` lists
/// the pair positions incident to v in edge order.
struct PairIndex {
  std::vector<Pair> pairs;
  std::vector<Index> edge_offsets;
  std::vector<Index> node_offsets;
  std::vector<Index> node_pairs;

  Index size() const noexcept { return static_cast<Index>(pairs.size()); }
};

struct Degrees {
  Eigen::VectorXd node;          // d_v = sum of incident edge weights
  std::vector<Index> edge_size;  // |e|
};

/// Validated weighted hypergraph. Members of every edge are stored sorted
/// ascending; the incidence enumeration is built once at construction.
class Hypergraph {
 public:
  /// Validates and builds. Throws Error with DegenerateEdge,
  /// NonPositiveWeight, NodeIdOutOfRange or IsolatedNode.
  static Hypergraph create(Index node_count, std::vector<std::vector<Index>> edges,
                           std::vector<double> weights);
  static Hypergraph create(Index node_count, std::vector<std::vector<Index>> edges);

  Index node_count() const noexcept { return node_count_; }
  Index edge_count() const noexcept { return static_cast<Index>(edges_.size()); }
  Index pair_count() const noexcept { return pair_index_.size(); }

  const std::vector<std::vector<Index>>& edges() const noexcept { return edges_; }
  const std::vector<Index>& edge(Index e) const { return edges_[static_cast<std::size_t>(e)]; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  double weight(Index e) const { return weights_[static_cast<std::size_t>(e)]; }

  const PairIndex& incidence() const noexcept { return pair_index_; }
  const Degrees& degree_info() const noexcept { return degrees_; }

  friend bool operator==(const Hypergraph& a, const Hypergraph& b) {
    return a.node_count_ == b.node_count_ && a.edges_ == b.edges_ && a.weights_ == b.weights_;
  }

 private:
  Hypergraph() = default;

  Index node_count_ = 0;
  std::vector<std::vector<Index>> edges_;
  std::vector<double> weights_;
  PairIndex pair_index_;
  Degrees degrees_;
};

Degrees degrees(const Hypergraph& hg);
PairIndex pair_index(const Hypergraph& hg);

struct Dataset {
  Hypergraph hypergraph;
  NodeSignal features;  // n x d_in, may have zero columns
  std::vector<int> labels;
  int class_count = 0;

  bool has_labels() const noexcept { return !labels.empty(); }
};

// --- document formats ------------------------------------------------------

/// Line-oriented text: header `n m`, then m lines `w_e k v_1 ... v_k`.
/// A document whose first non-blank character is '{' is read as the
/// structured (JSON) variant instead.
Hypergraph parse_hypergraph(std::string_view document);
Dataset parse_dataset(std::string_view document);
Dataset load_dataset(const std::string& path);

std::string to_text(const Hypergraph& hg);
std::string to_json(const Dataset& dataset);
std::string to_json(const Hypergraph& hg);

// --- synthetic data and perturbations --------------------------------------

struct SbmParams {
  Index nodes_per_class = 2500;
  Index edge_count = 1000;
  Index edge_size = 15;
  Index alpha = 1;
  Index feature_dim = 32;
  double sigma = 1.0;
  std::uint64_t seed = 0;
};

/// Two-class contextual hypergraph SBM. Every edge takes exactly `alpha`
/// nodes from a per-edge uniformly chosen minority class and the rest from
/// the other class. Class c features are N(c * 1, sigma^2 I).
Dataset generate_sbm(const SbmParams& params);

enum class FeatureNoise { Gaussian, Uniform, Mask };

FeatureNoise parse_feature_noise(std::string_view name);
std::string_view to_string(FeatureNoise kind);

/// Gaussian: X + rate * scale * N(0,1). Uniform: X + Unif(-rate, rate).
/// Mask: each entry zeroed with probability rate.
NodeSignal perturb_features(const NodeSignal& x, FeatureNoise kind, double rate,
                            std::uint64_t seed, double scale = 1.0);

/// Removes floor(rate * m) uniformly chosen edges and appends as many fake
/// edges whose (size, weight) are copied from uniformly drawn original edges.
/// Nodes orphaned by the removal are placed into the fake edges first; the
/// remaining slots are uniform without replacement.
Hypergraph perturb_structure(const Hypergraph& hg, double rate, std::uint64_t seed);

}  // namespace hnd
