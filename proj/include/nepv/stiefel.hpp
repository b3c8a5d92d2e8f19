#pragma once

#include <random>
#include <string>
#include <utility>

#include "nepv/linalg.hpp"

namespace nepv {

inline constexpr double kOrthTol = 1e-10;

/// Thin QR with the diagonal of R made non-negative, so the result is unique.
inline Mat orthonormalize(const Mat& x) {
  const Index n = x.rows(), k = x.cols();
  if (k > n) throw Error(ErrorKind::argument, "cannot orthonormalize more columns than rows");
  Eigen::HouseholderQR<Mat> qr(x);
  Mat q = qr.householderQ() * Mat::Identity(n, k);
  const Mat r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  for (Index j = 0; j < k; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

/// An n x k matrix with orthonormal columns.
class StiefelPoint {
 public:
  StiefelPoint() = default;

  explicit StiefelPoint(Mat x, double orth_tol = kOrthTol, bool reorthonormalize = false)
      : x_(std::move(x)) {
    if (x_.cols() > x_.rows() || x_.cols() == 0) {
      throw Error(ErrorKind::argument, "Stiefel point needs 1 <= k <= n, got " +
                                           std::to_string(x_.rows()) + "x" +
                                           std::to_string(x_.cols()));
    }
    const double defect = orthonormality_defect(x_);
    if (defect > orth_tol) {
      if (!reorthonormalize) {
        throw Error(ErrorKind::orthonormality,
                    "columns are not orthonormal (||X^T X - I||_F = " + std::to_string(defect) + ")");
      }
      x_ = orthonormalize(x_);
    }
  }

  static StiefelPoint from_any(const Mat& x) { return StiefelPoint(orthonormalize(x)); }

  const Mat& matrix() const { return x_; }
  operator const Mat&() const { return x_; }
  Index rows() const { return x_.rows(); }
  Index cols() const { return x_.cols(); }
  double defect() const { return orthonormality_defect(x_); }

 private:
  Mat x_;
};

inline Mat random_gaussian(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Mat m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  }
  return m;
}

/// Haar-distributed orthogonal matrix.
inline Mat random_orthogonal(Index k, std::mt19937_64& rng) {
  return orthonormalize(random_gaussian(k, k, rng));
}

inline StiefelPoint random_stiefel(Index n, Index k, std::mt19937_64& rng) {
  return StiefelPoint(orthonormalize(random_gaussian(n, k, rng)));
}

/// Orthonormal basis of the orthogonal complement of span(X).
inline Mat orthonormal_complement(const Mat& x) {
  const Index n = x.rows(), k = x.cols();
  Eigen::HouseholderQR<Mat> qr(x);
  const Mat q = qr.householderQ();
  return q.rightCols(n - k);
}

/// Random tangent direction at X (symmetric part of X^T E removed), unit Frobenius norm.
inline Mat random_tangent(const Mat& x, std::mt19937_64& rng) {
  Mat e = random_gaussian(x.rows(), x.cols(), rng);
  const Mat xe = x.transpose() * e;
  e -= x * (0.5 * (xe + xe.transpose()));
  return e / e.norm();
}

}  // namespace nepv
