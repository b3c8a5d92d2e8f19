#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "nepv/aligned.hpp"
#include "nepv/alignment.hpp"
#include "nepv/problem.hpp"
#include "nepv/scf.hpp"

namespace nepv {

/// X* in the eigenbasis of G(X*), with the complementary eigenpairs.
struct SolutionCertificate {
  StiefelPoint x_star;
  Vec lambda_star;  // lambda_1 >= ... >= lambda_k
  Vec lambda_perp;  // lambda_{k+1} >= ... >= lambda_n
  Mat x_perp;
  double gap = kNaN;
  RegularityRecord regular;
  double nres_at_star = kNaN;
  AlignedEvaluation eval;  // G and its ingredients at x_star
};

struct CertifyOptions {
  double cert_tol = 1e-10;
  double subspace_tol = 1e-8;
};

inline SolutionCertificate certify(const NepvProblem& p, const StiefelPoint& x,
                                   const CertifyOptions& opts = {}) {
  check_shape(p, x);
  SolutionCertificate c;
  c.nres_at_star = nres(p, x);
  if (!(c.nres_at_star <= opts.cert_tol)) {
    throw Error(ErrorKind::argument, "point is not a solution (NRes = " +
                                         std::to_string(c.nres_at_star) + ")");
  }
  c.regular = regularity_check(x, p.dfact);
  const AlignedEvaluation ev = g_matrix(p, x);
  const SymEigResult full = sym_eig(ev.g);
  const Index k = p.k, n = p.n;
  const Mat top = full.vectors.leftCols(k);
  const double mismatch = sin_theta_fro(x, top);
  if (mismatch > opts.subspace_tol) {
    throw Error(ErrorKind::mispositioning,
                "X spans an invariant subspace of G that is not the top-k one (sin theta = " +
                    std::to_string(mismatch) + "); try a level shift");
  }
  // Rayleigh-Ritz inside span(X) keeps the subspace and diagonalizes G there.
  const Mat t = x.matrix().transpose() * ev.g * x.matrix();
  const SymEigResult inner = sym_eig(0.5 * (t + t.transpose()));
  c.x_star = StiefelPoint(x.matrix() * inner.vectors, 1e-8, true);
  c.lambda_star = inner.values;
  c.lambda_perp = full.values.tail(n - k);
  if (n > k) {
    Mat perp = full.vectors.rightCols(n - k);
    perp -= c.x_star.matrix() * (c.x_star.matrix().transpose() * perp);
    c.x_perp = orthonormalize(perp);
    c.gap = c.lambda_star(k - 1) - c.lambda_perp(0);
    if (!(c.gap > 0.0)) {
      throw Error(ErrorKind::gap, "non-positive gap lambda_k - lambda_{k+1} = " + std::to_string(c.gap));
    }
  } else {
    c.x_perp = Mat::Zero(n, 0);
    c.gap = std::numeric_limits<double>::infinity();
  }
  c.eval = g_matrix(p, c.x_star);
  return c;
}

// ---------------------------------------------------------------------------
// Rate operators on (n-k) x k matrices.

inline Mat coupling_block(const SolutionCertificate& c, const NepvProblem& p, const Mat& z) {
  const Mat e = c.x_perp * z;
  return c.x_perp.transpose() * (dg_ambient(p, c.x_star, c.eval, e) * c.x_star.matrix());
}

/// 1 / (lambda_j - lambda_{k+i} + sigma); rejects denominators <= denom_tol * scale.
inline Mat scaling_matrix(const SolutionCertificate& c, double sigma, double denom_tol = 1e-12) {
  const Index m = c.lambda_perp.size(), k = c.lambda_star.size();
  const double scale = std::max({std::abs(c.lambda_star(0)),
                                 m > 0 ? std::abs(c.lambda_perp(m - 1)) : 0.0, 1.0});
  Mat s(m, k);
  for (Index j = 0; j < k; ++j) {
    for (Index i = 0; i < m; ++i) {
      const double den = c.lambda_star(j) - c.lambda_perp(i) + sigma;
      if (!(den > denom_tol * scale)) {
        throw Error(ErrorKind::singular_scaling,
                    "lambda_j - lambda_{k+i} + sigma = " + std::to_string(den) + " is not positive");
      }
      s(i, j) = 1.0 / den;
    }
  }
  return s;
}

inline Mat apply_Q(const SolutionCertificate& c, const NepvProblem& p, const Mat& z) {
  return c.lambda_perp.asDiagonal() * z - z * c.lambda_star.asDiagonal() + coupling_block(c, p, z);
}

inline Mat apply_L(const SolutionCertificate& c, const NepvProblem& p, const Mat& z) {
  return scaling_matrix(c, 0.0).cwiseProduct(coupling_block(c, p, z));
}

inline Mat apply_L_shifted(const SolutionCertificate& c, const NepvProblem& p, const Mat& z,
                           double sigma) {
  return scaling_matrix(c, sigma).cwiseProduct(apply_Q(c, p, z)) + z;
}

/// Operator handles that compute the scaling matrix once.
inline LinearOperator make_L_operator(const SolutionCertificate& c, const NepvProblem& p,
                                      std::optional<double> sigma = std::nullopt) {
  const Index m = c.lambda_perp.size(), k = c.lambda_star.size();
  const Mat s = scaling_matrix(c, sigma.value_or(0.0));
  LinearOperator op;
  op.rows = m;
  op.cols = k;
  if (!sigma) {
    op.apply = [&c, &p, s](const Mat& z) -> Mat { return s.cwiseProduct(coupling_block(c, p, z)); };
  } else {
    op.apply = [&c, &p, s](const Mat& z) -> Mat {
      return s.cwiseProduct(apply_Q(c, p, z)) + z;
    };
  }
  return op;
}

inline LinearOperator make_Q_operator(const SolutionCertificate& c, const NepvProblem& p) {
  LinearOperator op;
  op.rows = c.lambda_perp.size();
  op.cols = c.lambda_star.size();
  op.apply = [&c, &p](const Mat& z) -> Mat { return apply_Q(c, p, z); };
  return op;
}

struct RateEstimate {
  double rho = kNaN;
  RadiusMethod method = RadiusMethod::dense;
  bool converged = false;
  std::optional<double> sigma;
};

inline RateEstimate rho_L(const SolutionCertificate& c, const NepvProblem& p,
                          std::optional<double> sigma = std::nullopt,
                          const RadiusOptions& opts = {}) {
  RateEstimate est;
  est.sigma = sigma;
  if (c.lambda_perp.size() == 0) {
    est.rho = 0.0;
    est.converged = true;
    return est;
  }
  const RadiusResult r = spectral_radius(make_L_operator(c, p, sigma), opts);
  est.rho = r.rho;
  est.method = r.method;
  est.converged = r.converged;
  return est;
}

struct SigmaLowerResult {
  double sigma_l = kNaN;
  double mu_min = kNaN;
  double asymmetry = kNaN;  // ||K - K^T||_F / ||K||_F, NaN on the iterative path
  bool asymmetry_warning = false;
  bool iterative = false;
  bool converged = true;
};

struct SigmaLowerOptions {
  double asym_tol = 1e-6;
  Index dense_cap = 5000;
  bool allow_iterative = true;
  RadiusOptions radius{};
};

/// sigma_L = -mu_min / 2 - (lambda_k - lambda_{k+1}), mu_min the smallest
/// eigenvalue of the symmetrized matricization of Q.
inline SigmaLowerResult sigma_lower(const SolutionCertificate& c, const NepvProblem& p,
                                    const SigmaLowerOptions& opts = {}) {
  SigmaLowerResult out;
  const LinearOperator q = make_Q_operator(c, p);
  if (q.dim() == 0) throw Error(ErrorKind::argument, "k = n leaves no complement");
  if (q.dim() <= opts.dense_cap) {
    const Mat k = matricize(q);
    out.asymmetry = (k - k.transpose()).norm() / std::max(k.norm(), 1e-300);
    out.asymmetry_warning = out.asymmetry > opts.asym_tol;
    const Mat sym = 0.5 * (k + k.transpose());
    out.mu_min = Eigen::SelfAdjointEigenSolver<Mat>(sym, Eigen::EigenvaluesOnly).eigenvalues()(0);
  } else {
    if (!opts.allow_iterative) {
      throw Error(ErrorKind::capability, "sigma_L needs the full spectrum; dimension " +
                                             std::to_string(q.dim()) + " exceeds the dense cap");
    }
    // For symmetric Q: mu_min = c - rho(cI - Q) with c = rho(Q).
    out.iterative = true;
    RadiusOptions ro = opts.radius;
    ro.method = RadiusMethod::krylov;
    const RadiusResult rq = spectral_radius(q, ro);
    const double shift = rq.rho;
    LinearOperator shifted = q;
    shifted.apply = [&q, shift](const Mat& z) -> Mat { return shift * z - q.apply(z); };
    const RadiusResult rs = spectral_radius(shifted, ro);
    out.mu_min = shift - rs.rho;
    out.converged = rq.converged && rs.converged;
  }
  out.sigma_l = -0.5 * out.mu_min - c.gap;
  return out;
}

// ---------------------------------------------------------------------------
// Observed rates from iteration histories.

struct ObservedRate {
  bool defined = false;
  double rate = kNaN;
  int ratios = 0;
};

struct RateWindow {
  double floor = 1e-8;
  double ceiling = 1e-3;
  int max_ratios = 10;
  int min_points = 6;
};

/// Geometric mean of successive ratios over the tail of the run of values
/// inside (floor, ceiling).
inline ObservedRate observed_rate_of(const std::vector<double>& err, const RateWindow& w = {}) {
  ObservedRate out;
  if (static_cast<int>(err.size()) < w.min_points) return out;
  int last = -1;
  for (int i = static_cast<int>(err.size()) - 1; i >= 0; --i) {
    if (std::isfinite(err[i]) && err[i] > w.floor && err[i] < w.ceiling) {
      last = i;
      break;
    }
  }
  if (last < 0) return out;
  int first = last;
  while (first - 1 >= 0 && last - (first - 1) <= w.max_ratios && std::isfinite(err[first - 1]) &&
         err[first - 1] > w.floor && err[first - 1] < w.ceiling) {
    --first;
  }
  const int count = last - first;
  if (count < 2) return out;
  const double rate = std::pow(err[last] / err[first], 1.0 / count);
  if (!(rate < 1.0) || !std::isfinite(rate)) return out;
  out.defined = true;
  out.rate = rate;
  out.ratios = count;
  return out;
}

/// Angle-based observed rate against `reference`. Uses stored iterates when
/// present, otherwise the recorded sin-theta column.
inline ObservedRate observed_rate(const ScfReport& report, const StiefelPoint& reference,
                                  const RateWindow& w = {}) {
  std::vector<double> err;
  if (!report.iterates.empty()) {
    for (const Mat& x : report.iterates) err.push_back(sin_theta_fro(x, reference));
  } else {
    for (const ScfRecord& r : report.history) err.push_back(r.sin_theta);
  }
  return observed_rate_of(err, w);
}

inline ObservedRate observed_nres_rate(const ScfReport& report, const RateWindow& w = {}) {
  std::vector<double> err;
  for (const ScfRecord& r : report.history) err.push_back(r.nres);
  return observed_rate_of(err, w);
}

// ---------------------------------------------------------------------------
// Finite-difference validation of the analytic derivatives.

struct FdReport {
  double grad_phi = 0.0;
  double grad_psi = 0.0;
  double dh_phi = 0.0;
  double dh_psi = 0.0;
  double dm = 0.0;
  double dq_o = 0.0;
  double dg = 0.0;
  bool polar_applicable = true;

  double worst() const {
    return std::max({grad_phi, grad_psi, dh_phi, dh_psi, dm, dq_o, dg});
  }
};

struct FdOptions {
  int trials = 20;
  std::uint64_t seed = 1;
  std::vector<double> steps = {1e-4, 1e-5, 1e-6};  // scaled by max(1, ||X||_F)
};

namespace detail {

// Relative to the derivative, floored at 1e-8 of the differentiated quantity.
inline double rel_err(const Mat& approx, const Mat& exact, double value_norm) {
  const double den = std::max({exact.norm(), approx.norm(), 1e-8 * value_norm, 1e-300});
  return (approx - exact).norm() / den;
}

template <class F>
Mat central_difference(F&& f, const Mat& x, const Mat& e, double h) {
  return (f(x + h * e) - f(x - h * e)) / (2.0 * h);
}

}  // namespace detail

/// Worst relative error over `trials` random ambient directions; each trial
/// keeps the best of the configured step sizes.
inline FdReport fd_validate(const NepvProblem& p, const Mat& x, const FdOptions& opts = {}) {
  check_shape(p, x);
  if (!p.has_derivatives()) throw Error(ErrorKind::capability, "problem has no derivative callbacks");
  FdReport rep;
  rep.polar_applicable = p.dfact.r > 0;
  std::mt19937_64 rng(opts.seed);
  const double scale = std::max(1.0, x.norm());
  const AlignedEvaluation ev = g_matrix_ambient(p, x);
  const Mat hphi_x = p.h_phi(x) * x;
  const Mat hpsi_x = p.h_psi(x) * x;
  const double phi0 = p.phi(x), psi0 = p.psi(x);
  const double hphi_norm = p.h_phi(x).norm(), hpsi_norm = p.h_psi(x).norm();
  auto scalar = [](auto fn) {
    return [fn](const Mat& y) -> Mat { return Mat::Constant(1, 1, fn(y)); };
  };
  for (int trial = 0; trial < opts.trials; ++trial) {
    Mat e = random_gaussian(p.n, p.k, rng);
    e /= e.norm();
    const Mat an_phi = Mat::Constant(1, 1, trace_of_product(hphi_x, e));
    const Mat an_psi = Mat::Constant(1, 1, trace_of_product(hpsi_x, e));
    const Mat an_dhphi = p.dh_phi(x, e);
    const Mat an_dhpsi = p.dh_psi(x, e);
    const Mat an_dg = dg_ambient(p, x, ev, e);
    PolarDerivative an_pol;
    if (rep.polar_applicable) an_pol = d_canonical_polar(x, e, p.dfact, ev.bundle);

    double best[7];
    std::fill(std::begin(best), std::end(best), INFINITY);
    for (double step : opts.steps) {
      const double h = step * scale;
      // Gradients are compared along E relative to ||grad|| ||E||.
      const Mat fd_phi = detail::central_difference(scalar(p.phi), x, e, h);
      const Mat fd_psi = detail::central_difference(scalar(p.psi), x, e, h);
      best[0] = std::min(best[0], std::abs(fd_phi(0, 0) - an_phi(0, 0)) /
                                      std::max({hphi_x.norm(), 1e-8 * std::abs(phi0), 1e-300}));
      best[1] = std::min(best[1], std::abs(fd_psi(0, 0) - an_psi(0, 0)) /
                                      std::max({hpsi_x.norm(), 1e-8 * std::abs(psi0), 1e-300}));
      best[2] = std::min(best[2], detail::rel_err(detail::central_difference(p.h_phi, x, e, h),
                                                  an_dhphi, hphi_norm));
      best[3] = std::min(best[3], detail::rel_err(detail::central_difference(p.h_psi, x, e, h),
                                                  an_dhpsi, hpsi_norm));
      if (rep.polar_applicable) {
        auto m_of = [&p](const Mat& y) -> Mat { return canonical_polar(y, p.dfact).m; };
        auto q_of = [&p](const Mat& y) -> Mat { return canonical_polar(y, p.dfact).q_o; };
        best[4] = std::min(best[4], detail::rel_err(detail::central_difference(m_of, x, e, h),
                                                    an_pol.dm, ev.bundle.m.norm()));
        best[5] = std::min(best[5], detail::rel_err(detail::central_difference(q_of, x, e, h),
                                                    an_pol.dq_o, ev.bundle.q_o.norm()));
      } else {
        best[4] = best[5] = 0.0;
      }
      auto g_of = [&p](const Mat& y) -> Mat { return g_matrix_ambient(p, y).g; };
      best[6] = std::min(best[6], detail::rel_err(detail::central_difference(g_of, x, e, h),
                                                  an_dg, ev.g.norm()));
    }
    rep.grad_phi = std::max(rep.grad_phi, best[0]);
    rep.grad_psi = std::max(rep.grad_psi, best[1]);
    rep.dh_phi = std::max(rep.dh_phi, best[2]);
    rep.dh_psi = std::max(rep.dh_psi, best[3]);
    rep.dm = std::max(rep.dm, best[4]);
    rep.dq_o = std::max(rep.dq_o, best[5]);
    rep.dg = std::max(rep.dg, best[6]);
  }
  return rep;
}

}  // namespace nepv
