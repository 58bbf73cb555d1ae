#pragma once

#include "hnd/error.hpp"
#include "hnd/hypergraph.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <iomanip>
#include <limits>
#include <ostream>
#include <vector>

namespace hnd {

template <typename Scalar>
struct Entry {
  Index row;
  Index col;
  Scalar value;
};

/// Coordinate-format sparse matrix. Entries are sorted by (row, col),
/// duplicates summed in insertion order, explicit zeros dropped.
template <typename Scalar>
class SparseOperator {
 public:
  using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  SparseOperator() = default;

  SparseOperator(Index rows, Index cols, std::vector<Entry<Scalar>> entries)
      : rows_(rows), cols_(cols) {
    for (const auto& t : entries) {
      if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols) {
        throw Error(ErrorKind::ShapeMismatch, "sparse entry outside shape");
      }
    }
    std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    entries_.reserve(entries.size());
    for (const auto& t : entries) {
      if (!entries_.empty() && entries_.back().row == t.row && entries_.back().col == t.col) {
        entries_.back().value += t.value;
      } else {
        entries_.push_back(t);
      }
    }
    std::erase_if(entries_, [](const auto& t) { return t.value == Scalar(0); });
  }

  static SparseOperator identity(Index size) {
    std::vector<Entry<Scalar>> entries;
    for (Index i = 0; i < size; ++i) entries.push_back({i, i, Scalar(1)});
    return SparseOperator(size, size, std::move(entries));
  }

  template <typename Derived>
  static SparseOperator from_dense(const Eigen::MatrixBase<Derived>& dense) {
    std::vector<Entry<Scalar>> entries;
    for (Index r = 0; r < dense.rows(); ++r) {
      for (Index c = 0; c < dense.cols(); ++c) {
        if (dense(r, c) != Scalar(0)) entries.push_back({r, c, dense(r, c)});
      }
    }
    return SparseOperator(dense.rows(), dense.cols(), std::move(entries));
  }

  Index rows() const noexcept { return rows_; }
  Index cols() const noexcept { return cols_; }
  const std::vector<Entry<Scalar>>& entries() const noexcept { return entries_; }

  /// this * x, streaming the entries row by row.
  template <typename Derived>
  Signal<Scalar> apply(const Eigen::MatrixBase<Derived>& x) const {
    if (x.rows() != cols_) throw Error(ErrorKind::ShapeMismatch, "sparse apply: row count");
    Signal<Scalar> out = Signal<Scalar>::Zero(rows_, x.cols());
    for (const auto& t : entries_) out.row(t.row) += t.value * x.row(t.col);
    return out;
  }

  /// this^T * x.
  template <typename Derived>
  Signal<Scalar> apply_transpose(const Eigen::MatrixBase<Derived>& x) const {
    if (x.rows() != rows_) throw Error(ErrorKind::ShapeMismatch, "sparse apply_transpose: row count");
    Signal<Scalar> out = Signal<Scalar>::Zero(cols_, x.cols());
    for (const auto& t : entries_) out.row(t.col) += t.value * x.row(t.row);
    return out;
  }

  SparseOperator transpose() const {
    std::vector<Entry<Scalar>> entries;
    entries.reserve(entries_.size());
    for (const auto& t : entries_) entries.push_back({t.col, t.row, t.value});
    return SparseOperator(cols_, rows_, std::move(entries));
  }

  static constexpr Index kDenseLimit = 1'000'000;

  DenseMatrix to_dense() const {
    if (rows_ * cols_ > kDenseLimit) {
      throw Error(ErrorKind::TooLarge, std::to_string(rows_) + "x" + std::to_string(cols_) +
                                           " exceeds the dense materialization limit");
    }
    DenseMatrix out = DenseMatrix::Zero(rows_, cols_);
    for (const auto& t : entries_) out(t.row, t.col) = t.value;
    return out;
  }

  /// MatrixMarket coordinate real general, 1-based indices.
  void write_matrix_market(std::ostream& os) const {
    os << "%%MatrixMarket matrix coordinate real general\n";
    os << rows_ << ' ' << cols_ << ' ' << entries_.size() << '\n';
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& t : entries_) {
      os << t.row + 1 << ' ' << t.col + 1 << ' ' << static_cast<double>(t.value) << '\n';
    }
  }

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<Entry<Scalar>> entries_;
};

/// Exact dense materialization for test oracles (rows * cols <= 10^6).
template <typename Scalar>
typename SparseOperator<Scalar>::DenseMatrix dense_oracle(const SparseOperator<Scalar>& op) {
  return op.to_dense();
}

}  // namespace hnd
