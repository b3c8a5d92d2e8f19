#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "nepv/alignment.hpp"
#include "nepv/linalg.hpp"
#include "nepv/stiefel.hpp"

namespace nepv {

enum class Family { custom, alpha, theta };

inline const char* to_string(Family f) {
  switch (f) {
    case Family::custom: return "custom";
    case Family::alpha: return "alpha";
    case Family::theta: return "theta";
  }
  return "unknown";
}

/// f(X) = phi(X) + psi(X) tr(X^T D) with unitarily invariant phi, psi.
/// Callbacks take ambient n x k matrices so they can be differentiated numerically.
struct NepvProblem {
  Index n = 0;
  Index k = 0;
  Mat d;
  DFactorization dfact;

  std::function<double(const Mat&)> phi;
  std::function<double(const Mat&)> psi;
  std::function<Mat(const Mat&)> h_phi;
  std::function<Mat(const Mat&)> h_psi;
  std::function<Mat(const Mat&, const Mat&)> dh_phi;
  std::function<Mat(const Mat&, const Mat&)> dh_psi;
  std::function<double(const Mat&, const Mat&)> dpsi;

  Family family = Family::custom;
  Mat a;
  Mat b;
  double param = 0.0;  // alpha or theta

  bool has_derivatives() const { return dh_phi && dh_psi && dpsi; }
};

inline void check_shape(const NepvProblem& p, const Mat& x) {
  if (x.rows() != p.n || x.cols() != p.k) {
    throw Error(ErrorKind::argument, "X is " + std::to_string(x.rows()) + "x" +
                                         std::to_string(x.cols()) + ", problem expects " +
                                         std::to_string(p.n) + "x" + std::to_string(p.k));
  }
}

inline double trace_of_product(const Mat& x, const Mat& y) {  // tr(X^T Y)
  return (x.array() * y.array()).sum();
}

inline Mat build_h_ambient(const NepvProblem& p, const Mat& x) {
  const Mat dxt = p.d * x.transpose();
  Mat h = p.h_phi(x) + trace_of_product(x, p.d) * p.h_psi(x) + p.psi(x) * (dxt + dxt.transpose());
  return 0.5 * (h + h.transpose());
}

/// H(X) = H_phi + tr(X^T D) H_psi + psi (D X^T + X D^T).
inline Mat build_h(const NepvProblem& p, const StiefelPoint& x) {
  check_shape(p, x);
  return build_h_ambient(p, x);
}

inline double objective(const NepvProblem& p, const StiefelPoint& x) {
  check_shape(p, x);
  const double psi = p.psi(x);
  if (psi < 0.0) {
    throw Error(ErrorKind::positivity, "psi(X) = " + std::to_string(psi) + " is negative");
  }
  return p.phi(x) + psi * trace_of_product(x, p.d);
}

inline double norm1(const Mat& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().colwise().sum().maxCoeff();
}

/// ||R||_1 / ||H||_1 for R = H X - X (X^T H X), with the max-column-sum norm.
inline double nres_of(const Mat& h, const Mat& x) {
  const double hn = norm1(h);
  if (!(hn > 0.0)) throw Error(ErrorKind::degenerate_problem, "H(X) vanishes; NRes undefined");
  const Mat hx = h * x;
  return norm1(hx - x * (x.transpose() * hx)) / hn;
}

inline double nres(const NepvProblem& p, const StiefelPoint& x) { return nres_of(build_h(p, x), x); }

/// Residual of an eigenpair (Y, values) produced by one SCF step, measured
/// against H at the aligned iterate: ||H(X) Y - Y diag(values)||_1 / ||H(X)||_1.
inline double step_nres(const NepvProblem& p, const StiefelPoint& x, const Mat& y,
                        const Vec& values) {
  const Mat h = build_h(p, x);
  const double hn = norm1(h);
  if (!(hn > 0.0)) throw Error(ErrorKind::degenerate_problem, "H(X) vanishes; NRes undefined");
  return norm1(h * y - y * values.asDiagonal()) / hn;
}

inline void require_spd(const Mat& b, const char* what) {
  require_symmetric(b, 1e-10, what);
  Eigen::LLT<Mat> llt(0.5 * (b + b.transpose()));
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::definiteness, std::string(what) + " is not positive definite");
  }
}

namespace detail {

inline void check_family_inputs(const Mat& a, const Mat& b, const Mat& d) {
  require_symmetric(a, 1e-10, "A");
  require_spd(b, "B");
  if (a.rows() != b.rows() || d.rows() != a.rows()) {
    throw Error(ErrorKind::argument, "A, B and D must have the same number of rows");
  }
  if (d.cols() < 1 || d.cols() > d.rows()) {
    throw Error(ErrorKind::argument, "D must be n x k with 1 <= k <= n");
  }
}

inline NepvProblem skeleton(const Mat& a, const Mat& b, const Mat& d, Family fam, double param) {
  NepvProblem p;
  p.n = d.rows();
  p.k = d.cols();
  p.d = d;
  p.dfact = factor_d(d);
  p.family = fam;
  p.a = 0.5 * (a + a.transpose());
  p.b = 0.5 * (b + b.transpose());
  p.param = param;
  return p;
}

}  // namespace detail

/// phi = (1-alpha) tr(X^T A X) / t, psi = alpha / sqrt(t), t = tr(X^T B X).
inline NepvProblem make_alpha_problem(const Mat& a_in, const Mat& b_in, const Mat& d,
                                      double alpha) {
  detail::check_family_inputs(a_in, b_in, d);
  NepvProblem p = detail::skeleton(a_in, b_in, d, Family::alpha, alpha);
  const Mat a = p.a, b = p.b;
  auto t_of = [b](const Mat& x) { return trace_of_product(x, b * x); };
  auto phi = [a, t_of, alpha](const Mat& x) {
    return (1.0 - alpha) * trace_of_product(x, a * x) / t_of(x);
  };
  auto psi = [t_of, alpha](const Mat& x) { return alpha / std::sqrt(t_of(x)); };
  auto h_phi = [a, b, t_of, phi, alpha](const Mat& x) -> Mat {
    return (2.0 / t_of(x)) * ((1.0 - alpha) * a - phi(x) * b);
  };
  auto h_psi = [b, t_of, psi](const Mat& x) -> Mat { return (-psi(x) / t_of(x)) * b; };
  p.phi = phi;
  p.psi = psi;
  p.h_phi = h_phi;
  p.h_psi = h_psi;
  p.dh_phi = [b, t_of, h_phi](const Mat& x, const Mat& e) -> Mat {
    const double t = t_of(x);
    const Mat hp = h_phi(x);
    return (-2.0 * trace_of_product(x, b * e) / t) * hp -
           (2.0 * trace_of_product(x, hp * e) / t) * b;
  };
  p.dh_psi = [b, t_of, h_psi](const Mat& x, const Mat& e) -> Mat {
    return (-3.0 * trace_of_product(x, h_psi(x) * e) / t_of(x)) * b;
  };
  p.dpsi = [h_psi](const Mat& x, const Mat& e) { return trace_of_product(x, h_psi(x) * e); };
  return p;
}

/// psi = t^(-theta), phi = tr(X^T A X) psi, t = tr(X^T B X).
inline NepvProblem make_theta_problem(const Mat& a_in, const Mat& b_in, const Mat& d,
                                      double theta) {
  detail::check_family_inputs(a_in, b_in, d);
  NepvProblem p = detail::skeleton(a_in, b_in, d, Family::theta, theta);
  const Mat a = p.a, b = p.b;
  auto t_of = [b](const Mat& x) { return trace_of_product(x, b * x); };
  auto psi = [t_of, theta](const Mat& x) { return std::pow(t_of(x), -theta); };
  auto phi = [a, psi](const Mat& x) { return trace_of_product(x, a * x) * psi(x); };
  // H_phi with the exponent in front of B replaced by `th`.
  auto h_phi_with = [a, b, t_of, psi](const Mat& x, double th) -> Mat {
    const double t = t_of(x);
    return (2.0 * psi(x)) * (a - (th * trace_of_product(x, a * x) / t) * b);
  };
  auto h_phi = [h_phi_with, theta](const Mat& x) -> Mat { return h_phi_with(x, theta); };
  auto h_psi = [b, t_of, psi, theta](const Mat& x) -> Mat {
    return (-2.0 * theta * psi(x) / t_of(x)) * b;
  };
  p.phi = phi;
  p.psi = psi;
  p.h_phi = h_phi;
  p.h_psi = h_psi;
  p.dh_phi = [b, t_of, h_phi_with, theta](const Mat& x, const Mat& e) -> Mat {
    const double t = t_of(x);
    return (-2.0 * theta * trace_of_product(x, b * e) / t) * h_phi_with(x, theta) -
           (2.0 * theta * trace_of_product(x, h_phi_with(x, 1.0) * e) / t) * b;
  };
  p.dh_psi = [b, t_of, h_psi, theta](const Mat& x, const Mat& e) -> Mat {
    return (-2.0 * (theta + 1.0) * trace_of_product(x, h_psi(x) * e) / t_of(x)) * b;
  };
  p.dpsi = [h_psi](const Mat& x, const Mat& e) { return trace_of_product(x, h_psi(x) * e); };
  return p;
}

/// phi = tr(X^T A X) / 2, psi = 1, so H(X) = A + D X^T + X D^T.
/// With D = 0 this is a constant-H (linear) eigenproblem.
inline NepvProblem make_quadratic_problem(const Mat& a_in, const Mat& d) {
  require_symmetric(a_in, 1e-10, "A");
  if (d.rows() != a_in.rows() || d.cols() < 1 || d.cols() > d.rows()) {
    throw Error(ErrorKind::argument, "D must be n x k with 1 <= k <= n matching A");
  }
  const Index n = a_in.rows();
  NepvProblem p = detail::skeleton(a_in, Mat::Identity(n, n), d, Family::custom, 0.0);
  const Mat a = p.a;
  p.phi = [a](const Mat& x) { return 0.5 * trace_of_product(x, a * x); };
  p.psi = [](const Mat&) { return 1.0; };
  p.h_phi = [a](const Mat&) -> Mat { return a; };
  p.h_psi = [n](const Mat&) -> Mat { return Mat::Zero(n, n); };
  p.dh_phi = [n](const Mat&, const Mat&) -> Mat { return Mat::Zero(n, n); };
  p.dh_psi = [n](const Mat&, const Mat&) -> Mat { return Mat::Zero(n, n); };
  p.dpsi = [](const Mat&, const Mat&) { return 0.0; };
  return p;
}

}  // namespace nepv
