#pragma once

// Hypergraph gradient, divergence and Laplacian.
//
// Raw pair calculus (node space with the Euclidean product, pair space with
// the w_e-weighted product):
//   (grad f)(e,v) = f(v)/sqrt(d_v) - mean_{u in e} f(u)/sqrt(d_u)
//   (div g)(v)    = sum_{e ni v} (w_e/sqrt(d_v)) (g(e,v) - mean_{u in e} g(e,u))
//
// Scaled matrix G = S^{1/2} (B - C) D_v^{-1/2}, with S = diag(w_e) over pairs,
// B the pair-to-node selector and C the pair-to-edge-mean averager. Then
//   G f = S^{1/2} grad f,   div g = G^T S^{1/2} g,   G^T G = I - D_v^{-1/2} H W_e D_e^{-1} H^T D_v^{-1/2}.
// Diffusion uses -G^T diag(a) G x, with a the raw modulation weights.

#include "hnd/error.hpp"
#include "hnd/hypergraph.hpp"
#include "hnd/sparse.hpp"

#include <Eigen/Core>

#include <cmath>
#include <string>
#include <vector>

namespace hnd {

namespace detail {

inline void require_rows(Index actual, Index expected, const char* what) {
  if (actual != expected) {
    throw Error(ErrorKind::ShapeMismatch, std::string(what) + ": expected " +
                                              std::to_string(expected) + " rows, got " +
                                              std::to_string(actual));
  }
}

}  // namespace detail

/// Per-hypergraph cached scalings and the matrix-free G / G^T products.
template <typename Scalar = double>
class Operators {
 public:
  explicit Operators(const Hypergraph& hg) : hg_(&hg) {
    const auto& deg = hg.degree_info().node;
    inv_sqrt_degree_ = deg.cast<Scalar>().cwiseSqrt().cwiseInverse();
    sqrt_degree_ = deg.cast<Scalar>().cwiseSqrt();
    sqrt_weight_.resize(hg.edge_count());
    for (Index e = 0; e < hg.edge_count(); ++e) sqrt_weight_[e] = std::sqrt(Scalar(hg.weight(e)));
  }

  const Hypergraph& graph() const noexcept { return *hg_; }
  Index node_count() const noexcept { return hg_->node_count(); }
  Index pair_count() const noexcept { return hg_->pair_count(); }
  const Vector<Scalar>& inv_sqrt_degree() const noexcept { return inv_sqrt_degree_; }
  const Vector<Scalar>& sqrt_degree() const noexcept { return sqrt_degree_; }
  const Vector<Scalar>& sqrt_weight() const noexcept { return sqrt_weight_; }

  /// G x (N x d).
  template <typename Derived>
  Signal<Scalar> gradient(const Eigen::MatrixBase<Derived>& x) const {
    detail::require_rows(x.rows(), node_count(), "gradient");
    const auto& inc = hg_->incidence();
    Signal<Scalar> out(pair_count(), x.cols());
    Eigen::Matrix<Scalar, 1, Eigen::Dynamic> mean(x.cols());
    for (Index e = 0; e < hg_->edge_count(); ++e) {
      const Index begin = inc.edge_offsets[static_cast<std::size_t>(e)];
      const Index end = inc.edge_offsets[static_cast<std::size_t>(e) + 1];
      mean.setZero();
      for (Index p = begin; p < end; ++p) {
        const Index v = inc.pairs[static_cast<std::size_t>(p)].node;
        out.row(p) = inv_sqrt_degree_[v] * x.row(v);
        mean += out.row(p);
      }
      mean /= Scalar(end - begin);
      for (Index p = begin; p < end; ++p) out.row(p) = sqrt_weight_[e] * (out.row(p) - mean);
    }
    return out;
  }

  /// G^T g (n x d).
  template <typename Derived>
  Signal<Scalar> gradient_transpose(const Eigen::MatrixBase<Derived>& g) const {
    detail::require_rows(g.rows(), pair_count(), "gradient_transpose");
    const auto& inc = hg_->incidence();
    Signal<Scalar> out = Signal<Scalar>::Zero(node_count(), g.cols());
    Eigen::Matrix<Scalar, 1, Eigen::Dynamic> mean(g.cols());
    for (Index e = 0; e < hg_->edge_count(); ++e) {
      const Index begin = inc.edge_offsets[static_cast<std::size_t>(e)];
      const Index end = inc.edge_offsets[static_cast<std::size_t>(e) + 1];
      mean = g.middleRows(begin, end - begin).colwise().sum() / Scalar(end - begin);
      for (Index p = begin; p < end; ++p) {
        const Index v = inc.pairs[static_cast<std::size_t>(p)].node;
        out.row(v) += sqrt_weight_[e] * (g.row(p) - mean);
      }
    }
    return (inv_sqrt_degree_.asDiagonal() * out).eval();
  }

  /// G^T diag(a) G x.
  template <typename Derived>
  Signal<Scalar> apply(const Vector<Scalar>& a, const Eigen::MatrixBase<Derived>& x) const {
    detail::require_rows(a.rows(), pair_count(), "modulation");
    Signal<Scalar> gx = gradient(x);
    return gradient_transpose(a.asDiagonal() * gx);
  }

 private:
  const Hypergraph* hg_;
  Vector<Scalar> inv_sqrt_degree_;
  Vector<Scalar> sqrt_degree_;
  Vector<Scalar> sqrt_weight_;
};

/// Raw gradient of a node signal (no S^{1/2} scaling).
template <typename Derived>
Signal<typename Derived::Scalar> gradient_apply(const Hypergraph& hg,
                                                const Eigen::MatrixBase<Derived>& f) {
  using Scalar = typename Derived::Scalar;
  detail::require_rows(f.rows(), hg.node_count(), "gradient_apply");
  const auto& inc = hg.incidence();
  const auto& deg = hg.degree_info().node;
  Signal<Scalar> out(hg.pair_count(), f.cols());
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> mean(f.cols());
  for (Index e = 0; e < hg.edge_count(); ++e) {
    const Index begin = inc.edge_offsets[static_cast<std::size_t>(e)];
    const Index end = inc.edge_offsets[static_cast<std::size_t>(e) + 1];
    mean.setZero();
    for (Index p = begin; p < end; ++p) {
      const Index v = inc.pairs[static_cast<std::size_t>(p)].node;
      out.row(p) = f.row(v) / std::sqrt(Scalar(deg[v]));
      mean += out.row(p);
    }
    mean /= Scalar(end - begin);
    for (Index p = begin; p < end; ++p) out.row(p) -= mean;
  }
  return out;
}

/// Raw divergence of a pair signal; adjoint of gradient_apply under the
/// w_e-weighted pair product.
template <typename Derived>
Signal<typename Derived::Scalar> divergence_apply(const Hypergraph& hg,
                                                  const Eigen::MatrixBase<Derived>& g) {
  using Scalar = typename Derived::Scalar;
  detail::require_rows(g.rows(), hg.pair_count(), "divergence_apply");
  const auto& inc = hg.incidence();
  const auto& deg = hg.degree_info().node;
  Signal<Scalar> out = Signal<Scalar>::Zero(hg.node_count(), g.cols());
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> mean(g.cols());
  for (Index e = 0; e < hg.edge_count(); ++e) {
    const Index begin = inc.edge_offsets[static_cast<std::size_t>(e)];
    const Index end = inc.edge_offsets[static_cast<std::size_t>(e) + 1];
    mean = g.middleRows(begin, end - begin).colwise().sum() / Scalar(end - begin);
    for (Index p = begin; p < end; ++p) {
      const Index v = inc.pairs[static_cast<std::size_t>(p)].node;
      out.row(v) += Scalar(hg.weight(e)) * (g.row(p) - mean);
    }
  }
  for (Index v = 0; v < hg.node_count(); ++v) out.row(v) /= std::sqrt(Scalar(deg[v]));
  return out;
}

/// w_e-weighted inner product on the pair space.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar pair_inner_product(const Hypergraph& hg, const Eigen::MatrixBase<DerivedA>& g,
                                             const Eigen::MatrixBase<DerivedB>& h) {
  using Scalar = typename DerivedA::Scalar;
  Scalar total(0);
  for (Index p = 0; p < hg.pair_count(); ++p) {
    const Index e = hg.incidence().pairs[static_cast<std::size_t>(p)].edge;
    total += Scalar(hg.weight(e)) * g.row(p).dot(h.row(p));
  }
  return total;
}

/// G = S^{1/2} (B - C) D_v^{-1/2}, N x n.
template <typename Scalar = double>
SparseOperator<Scalar> scaled_gradient_matrix(const Hypergraph& hg) {
  const auto& inc = hg.incidence();
  const auto& deg = hg.degree_info().node;
  std::vector<Entry<Scalar>> entries;
  for (Index e = 0; e < hg.edge_count(); ++e) {
    const Index begin = inc.edge_offsets[static_cast<std::size_t>(e)];
    const Index end = inc.edge_offsets[static_cast<std::size_t>(e) + 1];
    const Scalar size(end - begin);
    const Scalar sw = std::sqrt(Scalar(hg.weight(e)));
    for (Index p = begin; p < end; ++p) {
      const Index v = inc.pairs[static_cast<std::size_t>(p)].node;
      for (Index q = begin; q < end; ++q) {
        const Index u = inc.pairs[static_cast<std::size_t>(q)].node;
        const Scalar selector = (u == v) ? Scalar(1) : Scalar(0);
        entries.push_back({p, u, sw * (selector - Scalar(1) / size) / std::sqrt(Scalar(deg[u]))});
      }
    }
  }
  return SparseOperator<Scalar>(hg.pair_count(), hg.node_count(), std::move(entries));
}

/// Closed-form I - D_v^{-1/2} H W_e D_e^{-1} H^T D_v^{-1/2}, n x n. Off-diagonal
/// pairs (v,u) and (u,v) are accumulated over the same edge sequence and are
/// bitwise symmetric.
template <typename Scalar = double>
SparseOperator<Scalar> laplacian_matrix(const Hypergraph& hg) {
  const auto& deg = hg.degree_info().node;
  std::vector<Entry<Scalar>> entries;
  for (Index v = 0; v < hg.node_count(); ++v) entries.push_back({v, v, Scalar(1)});
  for (Index e = 0; e < hg.edge_count(); ++e) {
    const auto& members = hg.edge(e);
    const Scalar scale = Scalar(hg.weight(e)) / Scalar(members.size());
    for (Index v : members) {
      for (Index u : members) {
        entries.push_back(
            {v, u, -scale / (std::sqrt(Scalar(deg[v])) * std::sqrt(Scalar(deg[u])))});
      }
    }
  }
  return SparseOperator<Scalar>(hg.node_count(), hg.node_count(), std::move(entries));
}

}  // namespace hnd
