#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "nepv/alignment.hpp"
#include "nepv/problem.hpp"

namespace nepv {

struct ScfOptions {
  double tol = 1e-13;
  int max_iters = 500;
  std::optional<double> shift;
  std::optional<StiefelPoint> reference;
  bool record_history = true;
  bool keep_iterates = false;
  bool stop_on_oscillation = false;
  double gap_tol = 1e-12;         // relative to ||H||_1
  int oscillation_window = 6;
  double oscillation_band = 1e-3;  // relative
};

enum class DivergenceKind { none, max_iters, oscillation, numerical_breakdown };

inline const char* to_string(DivergenceKind k) {
  switch (k) {
    case DivergenceKind::none: return "none";
    case DivergenceKind::max_iters: return "max_iters";
    case DivergenceKind::oscillation: return "oscillation-detected";
    case DivergenceKind::numerical_breakdown: return "numerical-breakdown";
  }
  return "unknown";
}

/// One row per evaluated iterate; row 0 is the (aligned) starting point.
struct ScfRecord {
  int iter = 0;
  double nres = kNaN;
  double step_nres = kNaN;  // residual of the eigenpair that produced this iterate
  double objective = kNaN;
  double gap = kNaN;        // lambda_k - lambda_{k+1} of the shifted matrix that produced it
  double sin_theta = kNaN;  // ||sin Theta(X_i, reference)||_F
  bool gap_warning = false;
};

struct ScfReport {
  StiefelPoint final_x;
  Mat final_lambda;
  bool converged = false;
  int iterations = 0;
  std::vector<ScfRecord> history;
  std::vector<Mat> iterates;
  DivergenceKind divergence_kind = DivergenceKind::none;
  bool oscillation_detected = false;
  double shift = 0.0;
};

struct ScfStep {
  StiefelPoint next;
  Mat lambda;        // Q^T diag(values) Q in the aligned basis
  Vec values;        // top-k eigenvalues of H(X) + shift X X^T
  Mat unaligned;     // eigenbasis before alignment
  double gap = kNaN;
  bool gap_warning = false;
};

/// Top-k eigenbasis of H(X) + shift X X^T, then aligned against D.
inline ScfStep scf_step(const NepvProblem& p, const StiefelPoint& x, double shift,
                        double gap_tol = 1e-12) {
  const Mat& xm = x.matrix();
  Mat h = build_h(p, x);
  const double hnorm = norm1(h);
  if (shift != 0.0) h += shift * (xm * xm.transpose());
  const SymEigResult eig = sym_eig_topk(h, p.k);
  ScfStep out;
  out.values = eig.values;
  out.unaligned = eig.vectors;
  out.gap = p.k < p.n ? eig.gap() : std::numeric_limits<double>::infinity();
  out.gap_warning = out.gap <= gap_tol * hnorm;
  const AlignmentResult al = align(StiefelPoint(eig.vectors, 1e-8, true), p.d);
  out.next = al.aligned_x;
  out.lambda = al.q.transpose() * eig.values.asDiagonal() * al.q;
  return out;
}

/// Two interleaved constant levels in the last `window` residuals.
inline bool detect_oscillation(const std::vector<ScfRecord>& hist, int window, double band) {
  if (window < 4 || static_cast<int>(hist.size()) < window) return false;
  const std::size_t start = hist.size() - static_cast<std::size_t>(window);
  double lo[2] = {INFINITY, INFINITY}, hi[2] = {-INFINITY, -INFINITY};
  for (std::size_t i = start; i < hist.size(); ++i) {
    const double v = hist[i].nres;
    if (!std::isfinite(v)) return false;
    const int parity = static_cast<int>((i - start) % 2);
    lo[parity] = std::min(lo[parity], v);
    hi[parity] = std::max(hi[parity], v);
  }
  const double scale = std::max({hi[0], hi[1], 1e-300});
  const bool tight = hi[0] - lo[0] <= band * scale && hi[1] - lo[1] <= band * scale;
  const double separation = std::abs(0.5 * (hi[0] + lo[0]) - 0.5 * (hi[1] + lo[1]));
  return tight && separation > 10.0 * band * scale;
}

inline double sin_theta_fro(const Mat& x, const Mat& ref) {
  return (x - ref * (ref.transpose() * x)).norm();
}

inline ScfReport run_scf(const NepvProblem& p, const StiefelPoint& x0, const ScfOptions& opts = {}) {
  if (!(opts.tol > 0.0)) throw Error(ErrorKind::argument, "tol must be positive");
  if (opts.max_iters < 1) throw Error(ErrorKind::argument, "max_iters must be >= 1");
  check_shape(p, x0);
  if (opts.reference) check_shape(p, *opts.reference);
  const double shift = opts.shift.value_or(0.0);

  ScfReport rep;
  rep.shift = shift;
  StiefelPoint x = x0;
  if (!regularity_check(x, p.dfact).definite) x = align(x, p.d).aligned_x;

  ScfRecord pending;  // step data attached to the next iterate
  for (int it = 0;; ++it) {
    ScfRecord rec = pending;
    rec.iter = it;
    const Mat h = build_h(p, x);
    rec.nres = nres_of(h, x);
    rec.objective = p.phi(x) + p.psi(x) * trace_of_product(x, p.d);
    if (opts.reference) rec.sin_theta = sin_theta_fro(x, *opts.reference);
    rep.history.push_back(rec);
    if (opts.keep_iterates) rep.iterates.push_back(x.matrix());
    if (!std::isfinite(rec.nres) || !x.matrix().allFinite()) {
      rep.divergence_kind = DivergenceKind::numerical_breakdown;
      break;
    }
    if (rec.nres <= opts.tol) {
      rep.converged = true;
      break;
    }
    const bool oscillating =
        detect_oscillation(rep.history, opts.oscillation_window, opts.oscillation_band);
    rep.oscillation_detected = rep.oscillation_detected || oscillating;
    if (oscillating && opts.stop_on_oscillation) {
      rep.divergence_kind = DivergenceKind::oscillation;
      break;
    }
    if (static_cast<int>(rep.history.size()) >= opts.max_iters) {
      rep.divergence_kind = oscillating ? DivergenceKind::oscillation : DivergenceKind::max_iters;
      break;
    }
    const ScfStep step = scf_step(p, x, shift, opts.gap_tol);
    x = step.next;
    pending = ScfRecord{};
    pending.gap = step.gap;
    pending.gap_warning = step.gap_warning;
    pending.step_nres =
        step_nres(p, x, step.unaligned, step.values - Vec::Constant(step.values.size(), shift));
  }
  rep.iterations = static_cast<int>(rep.history.size());
  rep.final_x = x;
  const Mat h = build_h(p, x);
  rep.final_lambda = x.matrix().transpose() * h * x.matrix();
  rep.final_lambda = 0.5 * (rep.final_lambda + rep.final_lambda.transpose());
  if (!opts.record_history) {
    const ScfRecord last = rep.history.back();
    rep.history.assign(1, last);
  }
  return rep;
}

inline ScfReport run_level_shifted_scf(const NepvProblem& p, const StiefelPoint& x0, double sigma,
                                       ScfOptions opts = {}) {
  opts.shift = sigma;
  return run_scf(p, x0, opts);
}

/// Top-k eigenvectors of the pencil (A, B), orthonormalized by their polar
/// factor and aligned against D when one is given.
inline StiefelPoint initial_guess_linear(const Mat& a, const Mat& b, Index k,
                                         const Mat* d = nullptr) {
  require_symmetric(a, 1e-10, "A");
  require_spd(b, "B");
  if (a.rows() != b.rows()) throw Error(ErrorKind::argument, "A and B sizes differ");
  const Mat bs = 0.5 * (b + b.transpose());
  Eigen::LLT<Mat> llt(bs);
  const Mat l = llt.matrixL();
  // C = L^{-1} A L^{-T}
  Mat c = l.triangularView<Eigen::Lower>().solve(a);
  c = l.triangularView<Eigen::Lower>().solve(c.transpose()).transpose();
  const SymEigResult eig = sym_eig_topk(0.5 * (c + c.transpose()), k);
  const Mat v = l.transpose().triangularView<Eigen::Upper>().solve(eig.vectors);
  Eigen::JacobiSVD<Mat> svd(v, Eigen::ComputeThinU | Eigen::ComputeThinV);
  StiefelPoint x(svd.matrixU() * svd.matrixV().transpose(), 1e-8, true);
  if (d != nullptr) x = align(x, *d).aligned_x;
  return x;
}

}  // namespace nepv
