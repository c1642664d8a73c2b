#pragma once

#include <cmath>

#include <Eigen/Dense>
#include <boost/math/special_functions/digamma.hpp>

#include "periodplr/errors.hpp"

namespace periodplr {

// Canonical (natural) parameterizations. Gaussian: eta1 = -precision/2,
// eta2 = precision * mean. Gamma: (-rate, shape-1). Wishart with scale V
// and dof n: (-V^{-1}/2, (n-p-1)/2).

struct GaussianCanonical {
  Eigen::MatrixXd eta1;
  Eigen::VectorXd eta2;

  int dim() const { return static_cast<int>(eta2.size()); }
};

inline GaussianCanonical gaussian_from_mean_precision(const Eigen::VectorXd& mean,
                                                      const Eigen::MatrixXd& precision) {
  return {-0.5 * precision, precision * mean};
}

struct GaussianMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  Eigen::MatrixXd second;  // E[x x^T]
};

namespace detail {

// LLT of -2*eta1 (the precision); definiteness is validated here.
inline Eigen::LLT<Eigen::MatrixXd> precision_factor(const GaussianCanonical& g) {
  Eigen::MatrixXd prec = -(g.eta1 + g.eta1.transpose());  // symmetrize -2*eta1
  Eigen::LLT<Eigen::MatrixXd> llt(prec);
  if (llt.info() != Eigen::Success)
    throw numerical_error("GaussianCanonical: -2*eta1 is not positive definite");
  return llt;
}

}  // namespace detail

inline GaussianMoments gaussian_moments(const GaussianCanonical& g) {
  auto llt = detail::precision_factor(g);
  GaussianMoments m;
  m.mean = llt.solve(g.eta2);
  m.cov = llt.solve(Eigen::MatrixXd::Identity(g.dim(), g.dim()));
  m.cov = 0.5 * (m.cov + m.cov.transpose()).eval();
  m.second = m.cov + m.mean * m.mean.transpose();
  m.second = 0.5 * (m.second + m.second.transpose()).eval();
  return m;
}

inline double gaussian_entropy(const GaussianCanonical& g) {
  auto llt = detail::precision_factor(g);
  double logdet_prec = 0.0;  // log det(-2*eta1)
  for (int i = 0; i < g.dim(); ++i) logdet_prec += 2.0 * std::log(llt.matrixL()(i, i));
  // -1/2 log det(-eta1/(pi e)) = d/2 log(2 pi e) - 1/2 log det(-2 eta1)
  return 0.5 * g.dim() * std::log(2.0 * M_PI * M_E) - 0.5 * logdet_prec;
}

struct GammaCanonical {
  double eta1 = -1.0;  // -rate
  double eta2 = 0.0;   // shape - 1

  double shape() const { return eta2 + 1.0; }
  double rate() const { return -eta1; }
};

inline GammaCanonical gamma_from_shape_rate(double shape, double rate) {
  return {-rate, shape - 1.0};
}

inline void validate(const GammaCanonical& g) {
  if (!(g.eta1 < 0.0) || !(g.eta2 > -1.0))
    throw numerical_error("GammaCanonical: need eta1 < 0 and eta2 > -1");
}

inline double gamma_mean(const GammaCanonical& g) {
  validate(g);
  return -(g.eta2 + 1.0) / g.eta1;
}

struct WishartCanonical {
  Eigen::MatrixXd eta1;  // -V^{-1}/2, negative definite
  double eta2 = 0.0;     // (n - p - 1)/2

  int dim() const { return static_cast<int>(eta1.rows()); }
  double dof() const { return 2.0 * eta2 + dim() + 1.0; }
};

inline WishartCanonical wishart_from_scale_dof(const Eigen::MatrixXd& scale, double dof) {
  const int p = static_cast<int>(scale.rows());
  Eigen::LLT<Eigen::MatrixXd> llt(scale);
  if (llt.info() != Eigen::Success) throw numerical_error("wishart_from_scale_dof: scale not SPD");
  Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(p, p));
  return {(-0.25 * (inv + inv.transpose())).eval(), (dof - p - 1.0) / 2.0};
}

inline double gamma_mean_log(const GammaCanonical& g) {
  validate(g);
  return boost::math::digamma(g.shape()) - std::log(g.rate());
}

inline double gamma_entropy(const GammaCanonical& g) {
  validate(g);
  const double a = g.shape(), b = g.rate();
  return a - std::log(b) + std::lgamma(a) + (1.0 - a) * boost::math::digamma(a);
}

inline Eigen::MatrixXd wishart_mean(const WishartCanonical& w) {
  const int p = w.dim();
  const double n = w.dof();
  if (!(n > 0.0)) throw numerical_error("wishart_mean: implied degrees of freedom nonpositive");
  Eigen::MatrixXd neg = -(0.5 * (w.eta1 + w.eta1.transpose()));
  Eigen::LLT<Eigen::MatrixXd> llt(neg);
  if (llt.info() != Eigen::Success) throw numerical_error("wishart_mean: eta1 not negative definite");
  Eigen::MatrixXd mean = 0.5 * n * llt.solve(Eigen::MatrixXd::Identity(p, p));
  return 0.5 * (mean + mean.transpose()).eval();
}

namespace detail {

inline double wishart_logdet_scale(const WishartCanonical& w) {
  Eigen::MatrixXd neg = -(0.5 * (w.eta1 + w.eta1.transpose()));  // V^{-1}/2
  Eigen::LLT<Eigen::MatrixXd> llt(neg);
  if (llt.info() != Eigen::Success) throw numerical_error("wishart: eta1 not negative definite");
  double logdet_inv_half = 0.0;  // log det(V^{-1}/2)
  for (int i = 0; i < w.dim(); ++i) logdet_inv_half += 2.0 * std::log(llt.matrixL()(i, i));
  return -logdet_inv_half - w.dim() * std::log(2.0);  // log det V
}

inline double lmvgamma(int p, double a) {
  double s = 0.25 * p * (p - 1) * std::log(M_PI);
  for (int j = 1; j <= p; ++j) s += std::lgamma(a + 0.5 * (1 - j));
  return s;
}

inline double mvdigamma(int p, double a) {
  double s = 0.0;
  for (int j = 1; j <= p; ++j) s += boost::math::digamma(a + 0.5 * (1 - j));
  return s;
}

}  // namespace detail

// E log det X for X ~ Wishart(V, n) = psi_p(n/2) + p log 2 + log det V.
inline double wishart_mean_logdet(const WishartCanonical& w) {
  const int p = w.dim();
  const double n = w.dof();
  if (!(n > p - 1)) throw numerical_error("wishart_mean_logdet: dof too small");
  return detail::mvdigamma(p, 0.5 * n) + p * std::log(2.0) + detail::wishart_logdet_scale(w);
}

inline double wishart_entropy(const WishartCanonical& w) {
  const int p = w.dim();
  const double n = w.dof();
  const double logdetV = detail::wishart_logdet_scale(w);
  return 0.5 * (p + 1) * logdetV + 0.5 * p * (p + 1) * std::log(2.0) + detail::lmvgamma(p, 0.5 * n) -
         0.5 * (n - p - 1) * detail::mvdigamma(p, 0.5 * n) + 0.5 * n * p;
}

}  // namespace periodplr
