#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "nepv/error.hpp"

namespace nepv {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

inline double symmetry_defect(const Mat& S) { return (S - S.transpose()).norm(); }

inline void require_square(const Mat& S, const char* what) {
  if (S.rows() != S.cols()) {
    throw Error(ErrorKind::argument, std::string(what) + " must be square, got " +
                                         std::to_string(S.rows()) + "x" +
                                         std::to_string(S.cols()));
  }
}

/// Rejects S when ||S - S^T||_F > rel_tol * ||S||_F.
inline void require_symmetric(const Mat& S, double rel_tol, const char* what) {
  require_square(S, what);
  const double defect = symmetry_defect(S);
  if (defect > rel_tol * std::max(S.norm(), std::numeric_limits<double>::min())) {
    throw Error(ErrorKind::symmetry, std::string(what) + " is not symmetric (||S-S^T||_F = " +
                                         std::to_string(defect) + ")");
  }
}

/// Symmetric eigendecomposition with values sorted in descending order.
/// For a truncated result `vectors` holds only the leading columns and
/// `next_value` is the first discarded eigenvalue (NaN when nothing was cut).
struct SymEigResult {
  Vec values;
  Mat vectors;
  double next_value = kNaN;

  Index count() const { return values.size(); }
  double gap() const {
    return values.size() == 0 ? kNaN : values(values.size() - 1) - next_value;
  }
};

inline SymEigResult sym_eig(const Mat& S, double sym_tol = 1e-10) {
  require_symmetric(S, sym_tol, "sym_eig input");
  const Index n = S.rows();
  const Mat sym = 0.5 * (S + S.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> solver(sym);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorKind::argument, "symmetric eigensolver failed to converge");
  }
  SymEigResult out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  // Eigen returns ascending order; flip.
  for (Index i = 0; i < n; ++i) {
    out.values(i) = solver.eigenvalues()(n - 1 - i);
    out.vectors.col(i) = solver.eigenvectors().col(n - 1 - i);
  }
  return out;
}

/// The k largest eigenpairs of a symmetric matrix, plus lambda_{k+1} for gap
/// reporting.
inline SymEigResult sym_eig_topk(const Mat& S, Index k, double sym_tol = 1e-10) {
  require_square(S, "sym_eig_topk input");
  if (k < 1 || k > S.rows()) {
    throw Error(ErrorKind::argument, "k = " + std::to_string(k) + " out of range [1, " +
                                         std::to_string(S.rows()) + "]");
  }
  SymEigResult full = sym_eig(S, sym_tol);
  SymEigResult out;
  out.values = full.values.head(k);
  out.vectors = full.vectors.leftCols(k);
  out.next_value = k < S.rows() ? full.values(k) : kNaN;
  return out;
}

/// Economy SVD. Singular values are non-increasing; `numerical_rank` counts
/// sigma_i > rank_tol * sigma_1.
struct SvdResult {
  Mat u;
  Vec sigma;
  Mat v;
  Index numerical_rank = 0;

  Mat u1() const { return u.leftCols(numerical_rank); }
  Mat u2() const { return u.rightCols(u.cols() - numerical_rank); }
  Mat v1() const { return v.leftCols(numerical_rank); }
  Mat v2() const { return v.rightCols(v.cols() - numerical_rank); }
  Vec sigma1() const { return sigma.head(numerical_rank); }
};

inline Index numerical_rank(const Vec& sigma, double rank_tol, double scale) {
  if (!(scale > 0.0)) return 0;
  Index r = 0;
  for (Index i = 0; i < sigma.size(); ++i) {
    if (sigma(i) > rank_tol * scale) ++r;
  }
  return r;
}

inline SvdResult svd_econ(const Mat& m, double rank_tol = 1e-12) {
  if (!(rank_tol > 0.0)) throw Error(ErrorKind::argument, "rank_tol must be positive");
  SvdResult out;
  if (m.size() == 0) {
    out.u = Mat::Zero(m.rows(), 0);
    out.v = Mat::Zero(m.cols(), 0);
    out.sigma = Vec::Zero(0);
    return out;
  }
  Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  out.u = svd.matrixU();
  out.sigma = svd.singularValues();
  out.v = svd.matrixV();
  out.numerical_rank = numerical_rank(out.sigma, rank_tol, out.sigma(0));
  return out;
}

/// Solves M1 L + L M1 = C from a precomputed eigendecomposition of the SPD
/// coefficient: L = W ((W^T C W)_ij / (lambda_i + lambda_j)) W^T.
inline Mat solve_lyapunov_spd(const SymEigResult& m1, const Mat& C) {
  const Index r = m1.values.size();
  if (C.rows() != r || C.cols() != r) {
    throw Error(ErrorKind::argument, "Lyapunov right-hand side has the wrong shape");
  }
  if (r == 0) return Mat::Zero(0, 0);
  if (!(m1.values.minCoeff() > 0.0)) {
    throw Error(ErrorKind::definiteness,
                "Lyapunov coefficient is not positive definite (min eigenvalue " +
                    std::to_string(m1.values.minCoeff()) + ")");
  }
  const Mat& w = m1.vectors;
  Mat t = w.transpose() * C * w;
  for (Index j = 0; j < r; ++j) {
    for (Index i = 0; i < r; ++i) t(i, j) /= m1.values(i) + m1.values(j);
  }
  Mat l = w * t * w.transpose();
  return 0.5 * (l + l.transpose());
}

inline Mat solve_lyapunov_spd(const Mat& M1, const Mat& C, double sym_tol = 1e-10) {
  require_symmetric(C, sym_tol, "Lyapunov right-hand side");
  return solve_lyapunov_spd(sym_eig(M1, sym_tol), 0.5 * (C + C.transpose()));
}

inline double orthonormality_defect(const Mat& X) {
  return (X.transpose() * X - Mat::Identity(X.cols(), X.cols())).norm();
}

struct PrincipalAngles {
  Vec angles;  // non-decreasing
  double sin_theta_fro = 0.0;
};

/// Canonical angles between span(X) and span(Y). Small angles come from the
/// sines, large ones from the cosines, so both ends stay accurate.
inline PrincipalAngles principal_angles(const Mat& X, const Mat& Y, double orth_tol = 1e-10) {
  if (X.rows() != Y.rows() || X.cols() != Y.cols()) {
    throw Error(ErrorKind::argument, "principal_angles needs equally shaped bases");
  }
  if (orthonormality_defect(X) > orth_tol || orthonormality_defect(Y) > orth_tol) {
    throw Error(ErrorKind::orthonormality, "principal_angles input is not orthonormal");
  }
  const Index k = X.cols();
  const Mat residual = X - Y * (Y.transpose() * X);
  PrincipalAngles out;
  out.sin_theta_fro = residual.norm();
  out.angles.resize(k);
  if (k == 0) return out;
  const Vec cosines = Eigen::JacobiSVD<Mat>(X.transpose() * Y).singularValues();
  Vec sines = Eigen::JacobiSVD<Mat>(residual).singularValues();
  std::sort(sines.data(), sines.data() + sines.size());
  for (Index i = 0; i < k; ++i) {
    const double c = std::clamp(cosines(i), -1.0, 1.0);
    const double s = i < sines.size() ? std::clamp(sines(i), 0.0, 1.0) : 0.0;
    out.angles(i) = c * c >= 0.5 ? std::asin(s) : std::acos(c);
  }
  std::sort(out.angles.data(), out.angles.data() + k);
  return out;
}

// ---------------------------------------------------------------------------
// Spectral radius of a linear map on rows x cols matrices.

struct LinearOperator {
  Index rows = 0;
  Index cols = 0;
  std::function<Mat(const Mat&)> apply;

  Index dim() const { return rows * cols; }
  Vec apply_vec(const Vec& x) const {
    const Mat z = Eigen::Map<const Mat>(x.data(), rows, cols);
    const Mat y = apply(z);
    return Eigen::Map<const Vec>(y.data(), y.size());
  }
};

/// Column j is vec(op(E_j)) for the column-major canonical basis E_j.
inline Mat matricize(const LinearOperator& op) {
  const Index m = op.dim();
  Mat k(m, m);
  for (Index j = 0; j < m; ++j) k.col(j) = op.apply_vec(Vec::Unit(m, j));
  return k;
}

enum class RadiusMethod { automatic, dense, power, krylov };

inline const char* to_string(RadiusMethod m) {
  switch (m) {
    case RadiusMethod::automatic: return "auto";
    case RadiusMethod::dense: return "dense";
    case RadiusMethod::power: return "power";
    case RadiusMethod::krylov: return "krylov";
  }
  return "unknown";
}

struct RadiusOptions {
  RadiusMethod method = RadiusMethod::automatic;
  double tol = 1e-10;
  int max_iters = 20000;
  Index dense_cap = 5000;
  Index block_size = 4;   // power path
  Index krylov_dim = 40;  // krylov path
  std::uint64_t seed = 0x5eed;
  bool check_linearity = true;
};

struct RadiusResult {
  double rho = kNaN;
  RadiusMethod method = RadiusMethod::dense;
  bool converged = false;
  int iterations = 0;
};

namespace detail {

inline Vec random_unit(Index m, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Vec v(m);
  for (Index i = 0; i < m; ++i) v(i) = normal(rng);
  return v / v.norm();
}

inline double max_modulus(const Eigen::VectorXcd& values) {
  double best = 0.0;
  for (Index i = 0; i < values.size(); ++i) best = std::max(best, std::abs(values(i)));
  return best;
}

inline void check_linear(const LinearOperator& op, std::mt19937_64& rng) {
  const Index m = op.dim();
  const Vec z1 = random_unit(m, rng);
  const Vec z2 = random_unit(m, rng);
  const double a = 0.7, b = -1.3;
  const Vec y1 = op.apply_vec(z1);
  const Vec y2 = op.apply_vec(z2);
  const Vec y = op.apply_vec(a * z1 + b * z2);
  const double scale = std::abs(a) * y1.norm() + std::abs(b) * y2.norm();
  // inputs are unit vectors, so an absolute floor covers the zero operator
  if ((y - a * y1 - b * y2).norm() > 1e-8 * scale + 1e-13) {
    throw Error(ErrorKind::argument, "operator failed the stochastic linearity check");
  }
}

inline RadiusResult radius_dense(const LinearOperator& op) {
  RadiusResult out;
  out.method = RadiusMethod::dense;
  if (op.dim() == 0) {
    out.rho = 0.0;
    out.converged = true;
    return out;
  }
  Eigen::EigenSolver<Mat> solver(matricize(op), /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorKind::argument, "dense eigensolver failed on the matricized operator");
  }
  out.rho = max_modulus(solver.eigenvalues());
  out.converged = true;
  out.iterations = 1;
  return out;
}

// Subspace (block power) iteration with Rayleigh-Ritz, so equal-modulus
// pairs (+-lambda, complex conjugates) do not stall the estimate.
inline RadiusResult radius_power(const LinearOperator& op, const RadiusOptions& opts,
                                 std::mt19937_64& rng) {
  RadiusResult out;
  out.method = RadiusMethod::power;
  const Index m = op.dim();
  const Index p = std::clamp<Index>(opts.block_size, 1, m);
  Mat v(m, p);
  for (Index j = 0; j < p; ++j) v.col(j) = random_unit(m, rng);
  v = Eigen::HouseholderQR<Mat>(v).householderQ() * Mat::Identity(m, p);
  double previous = kNaN;
  int stable = 0;
  for (int it = 1; it <= opts.max_iters; ++it) {
    Mat w(m, p);
    for (Index j = 0; j < p; ++j) w.col(j) = op.apply_vec(v.col(j));
    const Mat projected = v.transpose() * w;
    const double estimate =
        max_modulus(Eigen::EigenSolver<Mat>(projected, false).eigenvalues());
    out.rho = estimate;
    out.iterations = it;
    if (w.norm() == 0.0) {
      out.rho = 0.0;
      out.converged = true;
      return out;
    }
    if (std::isfinite(previous) &&
        std::abs(estimate - previous) <= opts.tol * std::max(estimate, 1e-300)) {
      if (++stable >= 3) {
        out.converged = true;
        return out;
      }
    } else {
      stable = 0;
    }
    previous = estimate;
    v = Eigen::HouseholderQR<Mat>(w).householderQ() * Mat::Identity(m, p);
  }
  return out;
}

// Explicitly restarted Arnoldi; the restart vector mixes the leading Ritz
// vectors (real and imaginary parts).
inline RadiusResult radius_krylov(const LinearOperator& op, const RadiusOptions& opts,
                                  std::mt19937_64& rng) {
  RadiusResult out;
  out.method = RadiusMethod::krylov;
  const Index n = op.dim();
  const Index m = std::clamp<Index>(opts.krylov_dim, 1, n);
  Vec start = random_unit(n, rng);
  double previous = kNaN;
  int applications = 0;
  const int max_restarts = std::max(1, opts.max_iters / static_cast<int>(m));
  for (int restart = 0; restart < max_restarts; ++restart) {
    Mat basis = Mat::Zero(n, m + 1);
    Mat hess = Mat::Zero(m + 1, m);
    basis.col(0) = start;
    Index steps = m;
    bool breakdown = false;
    for (Index j = 0; j < m; ++j) {
      Vec w = op.apply_vec(basis.col(j));
      ++applications;
      const double wnorm0 = w.norm();
      for (int pass = 0; pass < 2; ++pass) {
        for (Index i = 0; i <= j; ++i) {
          const double h = basis.col(i).dot(w);
          hess(i, j) += h;
          w -= h * basis.col(i);
        }
      }
      const double beta = w.norm();
      hess(j + 1, j) = beta;
      if (beta <= 1e-13 * std::max(wnorm0, hess.col(j).head(j + 1).norm())) {
        steps = j + 1;
        breakdown = true;
        break;
      }
      basis.col(j + 1) = w / beta;
    }
    const Mat h = hess.topLeftCorner(steps, steps);
    Eigen::EigenSolver<Mat> solver(h, true);
    const Eigen::VectorXcd theta = solver.eigenvalues();
    const Eigen::MatrixXcd y = solver.eigenvectors();
    std::vector<Index> order(static_cast<std::size_t>(theta.size()));
    for (Index i = 0; i < theta.size(); ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(),
              [&](Index a, Index b) { return std::abs(theta(a)) > std::abs(theta(b)); });
    const Index lead = order.front();
    const double estimate = std::abs(theta(lead));
    const double residual =
        breakdown ? 0.0 : std::abs(hess(steps, steps - 1)) * std::abs(y(steps - 1, lead)) /
                              std::max(y.col(lead).norm(), 1e-300);
    out.rho = estimate;
    out.iterations = applications;
    if (breakdown || residual <= opts.tol * std::max(estimate, 1e-300) ||
        (std::isfinite(previous) &&
         std::abs(estimate - previous) <= 0.1 * opts.tol * std::max(estimate, 1e-300))) {
      out.converged = true;
      return out;
    }
    previous = estimate;
    Vec next = Vec::Zero(n);
    const Index keep = std::min<Index>(theta.size(), 6);
    for (Index t = 0; t < keep; ++t) {
      const Index idx = order[static_cast<std::size_t>(t)];
      const Eigen::VectorXcd ritz = basis.leftCols(steps).cast<std::complex<double>>() * y.col(idx);
      Vec part = ritz.real() + ritz.imag();
      const double pn = part.norm();
      if (pn > 0.0) next += part / pn;
    }
    const double nn = next.norm();
    start = nn > 0.0 ? Vec(next / nn) : random_unit(n, rng);
  }
  return out;
}

}  // namespace detail

/// Spectral radius of `op`. The dense path matricizes on the canonical basis;
/// the iterative paths report `converged == false` rather than failing.
inline RadiusResult spectral_radius(const LinearOperator& op, const RadiusOptions& opts = {}) {
  std::mt19937_64 rng(opts.seed);
  if (op.dim() > 0 && opts.check_linearity) detail::check_linear(op, rng);
  RadiusMethod method = opts.method;
  if (method == RadiusMethod::automatic) {
    method = op.dim() <= opts.dense_cap ? RadiusMethod::dense : RadiusMethod::krylov;
  }
  if (op.dim() == 0) return detail::radius_dense(op);
  switch (method) {
    case RadiusMethod::dense:
      if (op.dim() > opts.dense_cap) {
        throw Error(ErrorKind::capability, "operator dimension " + std::to_string(op.dim()) +
                                               " exceeds the dense cap " +
                                               std::to_string(opts.dense_cap));
      }
      return detail::radius_dense(op);
    case RadiusMethod::power: return detail::radius_power(op, opts, rng);
    case RadiusMethod::krylov: return detail::radius_krylov(op, opts, rng);
    case RadiusMethod::automatic: break;
  }
  return detail::radius_dense(op);
}

}  // namespace nepv
