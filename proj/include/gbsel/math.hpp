#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Core>

namespace gbsel {

/// Row-major dynamic matrix. Row-major keeps every logit row contiguous and
/// makes the flat layout of a ParamState match its serialized order.
template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using RowMatrixXd = RowMatrix<double>;

/// log(sum(exp(v))) with max-subtraction. Returns -inf for an empty input or
/// when every entry is -inf.
template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::DenseBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  if (v.size() == 0) return -std::numeric_limits<Scalar>::infinity();
  const Scalar m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.derived().array() - m).exp().sum());
}

/// Numerically stable softmax of a vector expression.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(
    const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  if (v.size() == 0) throw std::invalid_argument("softmax: empty input");
  if (!v.allFinite()) throw std::invalid_argument("softmax: non-finite input");
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out =
      (v.derived().array() - v.maxCoeff()).exp().matrix();
  out /= out.sum();
  return out;
}

/// Row-wise softmax of a logit matrix.
template <typename Derived>
RowMatrix<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  if (!logits.allFinite()) throw std::invalid_argument("softmax: non-finite input");
  RowMatrix<Scalar> out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    out.row(r) = (row.array() - row.maxCoeff()).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

/// Symmetric Kullback-Leibler divergence KL(p||q) + KL(q||p) between two
/// strictly positive probability vectors.
template <typename DerivedP, typename DerivedQ>
typename DerivedP::Scalar symmetric_kl(const Eigen::MatrixBase<DerivedP>& p,
                                       const Eigen::MatrixBase<DerivedQ>& q) {
  return ((p.derived().array() - q.derived().array()) *
          (p.derived().array().log() - q.derived().array().log()))
      .sum();
}

}  // namespace gbsel
