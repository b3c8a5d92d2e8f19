#pragma once

#include <string>

#include "nepv/linalg.hpp"
#include "nepv/stiefel.hpp"

namespace nepv {

/// D = D1 * P^T with D1 of full column rank r and P orthonormal.
struct DFactorization {
  Mat d1;
  Mat p;
  Index r = 0;
  double rank_tol = 1e-12;
  double sigma_max = 0.0;  // sigma_1(D)
};

inline DFactorization factor_d(const Mat& d, double rank_tol = 1e-12) {
  if (!(rank_tol > 0.0)) throw Error(ErrorKind::argument, "rank_tol must be positive");
  const SvdResult svd = svd_econ(d, rank_tol);
  DFactorization f;
  f.rank_tol = rank_tol;
  f.sigma_max = svd.sigma.size() > 0 ? svd.sigma(0) : 0.0;
  f.r = svd.numerical_rank;
  f.d1 = svd.u1() * svd.sigma1().asDiagonal();
  f.p = svd.v1();
  return f;
}

struct AlignmentResult {
  StiefelPoint aligned_x;
  Mat q;
  SvdResult svd;
  Index ell = 0;
};

/// X * Q with Q = U V^T from the SVD X^T D = U S V^T, so (XQ)^T D is PSD.
inline AlignmentResult align(const StiefelPoint& x, const Mat& d, double rank_tol = 1e-12) {
  if (d.rows() != x.rows() || d.cols() != x.cols()) {
    throw Error(ErrorKind::argument, "align: D must have the shape of X");
  }
  AlignmentResult out;
  out.svd = svd_econ(x.matrix().transpose() * d, rank_tol);
  out.ell = out.svd.numerical_rank;
  const Index k = x.cols();
  out.q = out.svd.sigma(0) > 0.0 ? Mat(out.svd.u * out.svd.v.transpose()) : Mat(Mat::Identity(k, k));
  out.aligned_x = StiefelPoint(x.matrix() * out.q, kOrthTol, /*reorthonormalize=*/false);
  return out;
}

struct RegularityTolerances {
  double sym_tol = 1e-8;   // relative to sigma_1(D)
  double psd_tol = 1e-8;   // relative to sigma_1(D)
  double rank_tol = 1e-10; // relative to sigma_1(D)
};

struct RegularityRecord {
  bool definite = false;
  bool rank_preserving = false;
  double min_eig = 0.0;
  double sym_defect = 0.0;
  Index ell = 0;
  Index r = 0;
};

/// Definiteness (X^T D symmetric PSD) and rank preservation (rank X^T D = rank D).
/// Both ranks are measured against sigma_1(D).
inline RegularityRecord regularity_check(const StiefelPoint& x, const DFactorization& f,
                                         const RegularityTolerances& tol = {}) {
  RegularityRecord rec;
  rec.r = f.r;
  if (f.r == 0) {
    rec.definite = true;
    rec.rank_preserving = true;
    return rec;
  }
  const Mat xtd = x.matrix().transpose() * f.d1 * f.p.transpose();
  const double scale = f.sigma_max;
  rec.sym_defect = (xtd - xtd.transpose()).norm();
  const Mat sym = 0.5 * (xtd + xtd.transpose());
  rec.min_eig = Eigen::SelfAdjointEigenSolver<Mat>(sym, Eigen::EigenvaluesOnly).eigenvalues()(0);
  rec.definite = rec.sym_defect <= tol.sym_tol * scale && rec.min_eig >= -tol.psd_tol * scale;
  const SvdResult s = svd_econ(xtd);
  rec.ell = numerical_rank(s.sigma, tol.rank_tol, scale);
  rec.rank_preserving = rec.ell == f.r;
  return rec;
}

inline RegularityRecord regularity_check(const StiefelPoint& x, const Mat& d,
                                         const RegularityTolerances& tol = {}) {
  return regularity_check(x, factor_d(d), tol);
}

/// X^T D = Q_o M with Q_o = Q1 P^T and M = P M1 P^T, from the polar
/// decomposition X^T D1 = Q1 M1.
struct CanonicalPolarBundle {
  Mat q_o;
  Mat m;
  Mat q1;
  Mat m1;
  SymEigResult m1_eig;
  double sigma_min = 0.0;  // sigma_min(X^T D1)
};

/// Accepts any n x k matrix X so that derivatives can be checked off the manifold.
inline CanonicalPolarBundle canonical_polar(const Mat& x, const DFactorization& f,
                                            double rank_tol = 1e-10) {
  const Index k = x.cols();
  CanonicalPolarBundle b;
  if (f.r == 0) {
    b.q_o = Mat::Zero(k, k);
    b.m = Mat::Zero(k, k);
    b.q1 = Mat::Zero(k, 0);
    b.m1 = Mat::Zero(0, 0);
    b.m1_eig.values = Vec::Zero(0);
    b.m1_eig.vectors = Mat::Zero(0, 0);
    return b;
  }
  const Mat z = x.transpose() * f.d1;
  Eigen::JacobiSVD<Mat> svd(z, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec s = svd.singularValues();
  b.sigma_min = s(s.size() - 1);
  if (!(b.sigma_min > rank_tol * f.sigma_max)) {
    throw Error(ErrorKind::rank_preserving,
                "X^T D1 lost column rank (sigma_min = " + std::to_string(b.sigma_min) + ")");
  }
  const Mat& v = svd.matrixV();
  b.m1 = v * s.asDiagonal() * v.transpose();
  b.m1 = 0.5 * (b.m1 + b.m1.transpose());
  b.q1 = svd.matrixU() * v.transpose();
  b.m1_eig.values = s;
  b.m1_eig.vectors = v;
  b.q_o = b.q1 * f.p.transpose();
  b.m = f.p * b.m1 * f.p.transpose();
  return b;
}

struct PolarDerivative {
  Mat dm;
  Mat dq_o;
  Mat l;
};

inline Mat apply_m1_inverse(const SymEigResult& m1, const Mat& rhs_right) {
  // rhs_right * M1^{-1}
  return rhs_right * m1.vectors * m1.values.cwiseInverse().asDiagonal() * m1.vectors.transpose();
}

/// Directional derivatives of M and Q_o along E via the Lyapunov equation
/// M1 L + L M1 = Z^T Y + Y^T Z with Z = X^T D1, Y = E^T D1.
inline PolarDerivative d_canonical_polar(const Mat& x, const Mat& e, const DFactorization& f,
                                         const CanonicalPolarBundle& b) {
  const Index k = x.cols();
  PolarDerivative out;
  if (f.r == 0) {
    out.dm = Mat::Zero(k, k);
    out.dq_o = Mat::Zero(k, k);
    out.l = Mat::Zero(0, 0);
    return out;
  }
  const Mat z = x.transpose() * f.d1;
  const Mat y = e.transpose() * f.d1;
  const Mat zty = z.transpose() * y;
  out.l = solve_lyapunov_spd(b.m1_eig, zty + zty.transpose());
  out.dm = f.p * out.l * f.p.transpose();
  out.dq_o = apply_m1_inverse(b.m1_eig, y - b.q1 * out.l) * f.p.transpose();
  return out;
}

struct FullPolarDerivative {
  Mat dm;
  Mat dq;
};

/// Derivatives of the polar factors of a full-column-rank Z = Q M along Y.
inline FullPolarDerivative d_polar_full(const Mat& z, const Mat& y, double rank_tol = 1e-12) {
  if (z.rows() != y.rows() || z.cols() != y.cols()) {
    throw Error(ErrorKind::argument, "d_polar_full: Z and Y shapes differ");
  }
  if (z.cols() > z.rows()) {
    throw Error(ErrorKind::argument, "d_polar_full: Z must have at least as many rows as columns");
  }
  Eigen::JacobiSVD<Mat> svd(z, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec s = svd.singularValues();
  if (s.size() > 0 && !(s(s.size() - 1) > rank_tol * s(0))) {
    throw Error(ErrorKind::definiteness, "d_polar_full: Z is rank deficient");
  }
  SymEigResult m_eig;
  m_eig.values = s;
  m_eig.vectors = svd.matrixV();
  const Mat q = svd.matrixU() * svd.matrixV().transpose();
  const Mat ytz = y.transpose() * z;
  FullPolarDerivative out;
  out.dm = solve_lyapunov_spd(m_eig, ytz + ytz.transpose());
  out.dq = apply_m1_inverse(m_eig, y - q * out.dm);
  return out;
}

}  // namespace nepv
