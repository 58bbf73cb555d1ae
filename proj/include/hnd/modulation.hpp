#pragma once

// Feature-adaptive modulation weights over hyperedge-node pairs.
//
// Per pair (e, v):
//   x_e  = Agg_{u in e} x_u                      (mean or max)
//   z    = [x_v W || x_e W] W_hidden + b_hidden  (width d)
//   s    = lrelu(lrelu(z) . w_out + b_out)
//   a    = exp(s) / sum_{e' ni v} exp(s(e', v))
// Reverse-mode products for every stage live next to the forward pass.

#include "hnd/error.hpp"
#include "hnd/hypergraph.hpp"
#include "hnd/operators.hpp"
#include "hnd/rng.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string_view>

namespace hnd {

enum class Aggregator { Mean, Max };

inline Aggregator parse_aggregator(std::string_view name) {
  if (name == "mean") return Aggregator::Mean;
  if (name == "max") return Aggregator::Max;
  throw Error(ErrorKind::InvalidConfig, "unknown aggregator '" + std::string(name) + "'");
}

template <typename Scalar = double>
struct AttentionParams {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Matrix projection;     // d x d
  Matrix hidden_weight;  // 2d x d, rows [0, d) act on the node half
  Matrix hidden_bias;    // 1 x d
  Matrix output_weight;  // d x 1
  Scalar output_bias = Scalar(0);
  Scalar leaky_slope = Scalar(0.01);

  Index dim() const noexcept { return projection.rows(); }

  static AttentionParams zeros(Index d) {
    AttentionParams p;
    p.projection = Matrix::Zero(d, d);
    p.hidden_weight = Matrix::Zero(2 * d, d);
    p.hidden_bias = Matrix::Zero(1, d);
    p.output_weight = Matrix::Zero(d, 1);
    return p;
  }

  /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  static AttentionParams random(Index d, SplitMix64& rng) {
    auto fill = [&](Matrix& m, Index fan_in) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) m(r, c) = Scalar(rng.uniform(-bound, bound));
    };
    AttentionParams p = zeros(d);
    fill(p.projection, d);
    fill(p.hidden_weight, 2 * d);
    fill(p.hidden_bias, 2 * d);
    fill(p.output_weight, d);
    Matrix bias(1, 1);
    fill(bias, d);
    p.output_bias = bias(0, 0);
    return p;
  }

  /// Visits every learnable block in checkpoint order.
  template <typename F>
  void for_each_block(F&& f) {
    f(projection);
    f(hidden_weight);
    f(hidden_bias);
    f(output_weight);
    Eigen::Map<Matrix> bias(&output_bias, 1, 1);
    f(bias);
  }
  template <typename F>
  void for_each_block(F&& f) const {
    f(projection);
    f(hidden_weight);
    f(hidden_bias);
    f(output_weight);
    Eigen::Map<const Matrix> bias(&output_bias, 1, 1);
    f(bias);
  }
};

/// Row e is Agg_{u in e}(x_u).
template <typename Derived>
Signal<typename Derived::Scalar> edge_features(const Eigen::MatrixBase<Derived>& x, const Hypergraph& hg,
                                               Aggregator agg = Aggregator::Mean) {
  using Scalar = typename Derived::Scalar;
  detail::require_rows(x.rows(), hg.node_count(), "edge_features");
  Signal<Scalar> out(hg.edge_count(), x.cols());
  for (Index e = 0; e < hg.edge_count(); ++e) {
    const auto& members = hg.edge(e);
    if (agg == Aggregator::Mean) {
      out.row(e).setZero();
      for (Index u : members) out.row(e) += x.row(u);
      out.row(e) /= Scalar(members.size());
    } else {
      out.row(e) = x.row(members.front());
      for (Index u : members) out.row(e) = out.row(e).cwiseMax(x.row(u));
    }
  }
  return out;
}

/// Adjoint of edge_features: scatters an m x d cotangent back to nodes. Max
/// routes each coordinate to the first (lowest id) member attaining it.
template <typename Scalar, typename DerivedX>
Signal<Scalar> edge_features_backward(const Signal<Scalar>& d_edge, const Eigen::MatrixBase<DerivedX>& x,
                                      const Hypergraph& hg, Aggregator agg) {
  Signal<Scalar> dx = Signal<Scalar>::Zero(hg.node_count(), d_edge.cols());
  for (Index e = 0; e < hg.edge_count(); ++e) {
    const auto& members = hg.edge(e);
    if (agg == Aggregator::Mean) {
      for (Index u : members) dx.row(u) += d_edge.row(e) / Scalar(members.size());
    } else {
      for (Index c = 0; c < d_edge.cols(); ++c) {
        Index best = members.front();
        for (Index u : members)
          if (x(u, c) > x(best, c)) best = u;
        dx(best, c) += d_edge(e, c);
      }
    }
  }
  return dx;
}

template <typename Scalar>
Scalar leaky_relu(Scalar z, Scalar slope) {
  return z >= Scalar(0) ? z : slope * z;
}
template <typename Scalar>
Scalar leaky_relu_slope(Scalar z, Scalar slope) {
  return z >= Scalar(0) ? Scalar(1) : slope;
}

/// Intermediates kept by similarity_scores for the reverse pass.
template <typename Scalar>
struct ScoreCache {
  Signal<Scalar> edge_feat;   // m x d
  Signal<Scalar> node_proj;   // n x d, X W
  Signal<Scalar> edge_proj;   // m x d, E W
  Signal<Scalar> pre_hidden;  // N x d
  Vector<Scalar> pre_output;  // N
  Vector<Scalar> scores;      // N
};

template <typename Scalar, typename Derived>
ScoreCache<Scalar> similarity_forward(const AttentionParams<Scalar>& params,
                                      const Eigen::MatrixBase<Derived>& x, const Hypergraph& hg,
                                      Aggregator agg = Aggregator::Mean) {
  const Index d = params.dim();
  if (x.cols() != d || params.hidden_weight.rows() != 2 * d || params.hidden_weight.cols() != d ||
      params.hidden_bias.cols() != d || params.output_weight.rows() != d) {
    throw Error(ErrorKind::ShapeMismatch, "attention parameters do not match feature width");
  }
  ScoreCache<Scalar> cache;
  cache.edge_feat = edge_features(x, hg, agg);
  cache.node_proj = x * params.projection;
  cache.edge_proj = cache.edge_feat * params.projection;
  const Signal<Scalar> node_hidden = cache.node_proj * params.hidden_weight.topRows(d);
  const Signal<Scalar> edge_hidden = cache.edge_proj * params.hidden_weight.bottomRows(d);

  const auto& pairs = hg.incidence().pairs;
  const Index N = hg.pair_count();
  cache.pre_hidden.resize(N, d);
  cache.pre_output.resize(N);
  cache.scores.resize(N);
  for (Index p = 0; p < N; ++p) {
    const auto [e, v] = pairs[static_cast<std::size_t>(p)];
    cache.pre_hidden.row(p) = node_hidden.row(v) + edge_hidden.row(e) + params.hidden_bias;
    Scalar o = params.output_bias;
    for (Index k = 0; k < d; ++k) {
      o += leaky_relu(cache.pre_hidden(p, k), params.leaky_slope) * params.output_weight(k, 0);
    }
    cache.pre_output[p] = o;
    cache.scores[p] = leaky_relu(o, params.leaky_slope);
  }
  return cache;
}

/// Scalar score per pair, in PairIndex order.
template <typename Scalar, typename Derived>
Vector<Scalar> similarity_scores(const AttentionParams<Scalar>& params, const Eigen::MatrixBase<Derived>& x,
                                 const Hypergraph& hg, Aggregator agg = Aggregator::Mean) {
  return similarity_forward(params, x, hg, agg).scores;
}

/// Reverse pass: given dL/ds, accumulates dL/dparams into `grad` and returns dL/dx.
template <typename Scalar, typename Derived>
Signal<Scalar> similarity_backward(const AttentionParams<Scalar>& params, const Eigen::MatrixBase<Derived>& x,
                                   const Hypergraph& hg, Aggregator agg, const ScoreCache<Scalar>& cache,
                                   const Vector<Scalar>& d_scores, AttentionParams<Scalar>& grad) {
  const Index d = params.dim();
  const Index N = hg.pair_count();
  const auto& pairs = hg.incidence().pairs;
  Signal<Scalar> d_node_hidden = Signal<Scalar>::Zero(hg.node_count(), d);
  Signal<Scalar> d_edge_hidden = Signal<Scalar>::Zero(hg.edge_count(), d);
  for (Index p = 0; p < N; ++p) {
    const Scalar d_out = d_scores[p] * leaky_relu_slope(cache.pre_output[p], params.leaky_slope);
    if (d_out == Scalar(0)) continue;
    grad.output_bias += d_out;
    const auto [e, v] = pairs[static_cast<std::size_t>(p)];
    for (Index k = 0; k < d; ++k) {
      const Scalar z = cache.pre_hidden(p, k);
      grad.output_weight(k, 0) += d_out * leaky_relu(z, params.leaky_slope);
      const Scalar dz = d_out * params.output_weight(k, 0) * leaky_relu_slope(z, params.leaky_slope);
      grad.hidden_bias(0, k) += dz;
      d_node_hidden(v, k) += dz;
      d_edge_hidden(e, k) += dz;
    }
  }
  grad.hidden_weight.topRows(d) += cache.node_proj.transpose() * d_node_hidden;
  grad.hidden_weight.bottomRows(d) += cache.edge_proj.transpose() * d_edge_hidden;
  const Signal<Scalar> d_node_proj = d_node_hidden * params.hidden_weight.topRows(d).transpose();
  const Signal<Scalar> d_edge_proj = d_edge_hidden * params.hidden_weight.bottomRows(d).transpose();
  grad.projection += x.transpose() * d_node_proj + cache.edge_feat.transpose() * d_edge_proj;
  const Signal<Scalar> d_edge_feat = d_edge_proj * params.projection.transpose();
  Signal<Scalar> dx = d_node_proj * params.projection.transpose();
  dx += edge_features_backward(d_edge_feat, x, hg, agg);
  return dx;
}

/// Per-node softmax over incident pairs, max-shifted.
template <typename Scalar>
Vector<Scalar> normalize_modulation(const Vector<Scalar>& scores, const Hypergraph& hg) {
  detail::require_rows(scores.rows(), hg.pair_count(), "normalize_modulation");
  const auto& inc = hg.incidence();
  Vector<Scalar> a(scores.rows());
  for (Index v = 0; v < hg.node_count(); ++v) {
    const Index begin = inc.node_offsets[static_cast<std::size_t>(v)];
    const Index end = inc.node_offsets[static_cast<std::size_t>(v) + 1];
    Scalar shift = scores[inc.node_pairs[static_cast<std::size_t>(begin)]];
    for (Index i = begin; i < end; ++i) shift = std::max(shift, scores[inc.node_pairs[static_cast<std::size_t>(i)]]);
    Scalar total(0);
    for (Index i = begin; i < end; ++i) {
      const Index p = inc.node_pairs[static_cast<std::size_t>(i)];
      a[p] = std::exp(scores[p] - shift);
      total += a[p];
    }
    for (Index i = begin; i < end; ++i) a[inc.node_pairs[static_cast<std::size_t>(i)]] /= total;
  }
  return a;
}

/// Reverse pass of normalize_modulation: ds_p = a_p (da_p - sum_{q ~ v} a_q da_q).
template <typename Scalar>
Vector<Scalar> normalize_modulation_backward(const Vector<Scalar>& a, const Vector<Scalar>& d_a,
                                             const Hypergraph& hg) {
  const auto& inc = hg.incidence();
  Vector<Scalar> ds(a.rows());
  for (Index v = 0; v < hg.node_count(); ++v) {
    const Index begin = inc.node_offsets[static_cast<std::size_t>(v)];
    const Index end = inc.node_offsets[static_cast<std::size_t>(v) + 1];
    Scalar dot(0);
    for (Index i = begin; i < end; ++i) {
      const Index p = inc.node_pairs[static_cast<std::size_t>(i)];
      dot += a[p] * d_a[p];
    }
    for (Index i = begin; i < end; ++i) {
      const Index p = inc.node_pairs[static_cast<std::size_t>(i)];
      ds[p] = a[p] * (d_a[p] - dot);
    }
  }
  return ds;
}

/// a(e, v) = 1 / (number of edges incident to v).
template <typename Scalar = double>
Vector<Scalar> uniform_modulation(const Hypergraph& hg) {
  const auto& inc = hg.incidence();
  Vector<Scalar> a(hg.pair_count());
  for (Index p = 0; p < hg.pair_count(); ++p) {
    const auto v = static_cast<std::size_t>(inc.pairs[static_cast<std::size_t>(p)].node);
    a[p] = Scalar(1) / Scalar(inc.node_offsets[v + 1] - inc.node_offsets[v]);
  }
  return a;
}

/// Full modulation map x -> a(x).
template <typename Scalar, typename Derived>
Vector<Scalar> softmax_modulation(const AttentionParams<Scalar>& params, const Eigen::MatrixBase<Derived>& x,
                                  const Hypergraph& hg, Aggregator agg = Aggregator::Mean) {
  return normalize_modulation(similarity_scores(params, x, hg, agg), hg);
}

}  // namespace hnd
