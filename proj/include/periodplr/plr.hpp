#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "periodplr/errors.hpp"

namespace periodplr {

// Quadratic PLR in the y = log10(P) - 2.3 parameterization.
struct PLRFit {
  double a0 = 0.0, a1 = 0.0, a2 = 0.0;
  double sigma = 0.0;           // residual standard deviation
  Eigen::Vector3d se{0, 0, 0};  // coefficient standard errors (se(2)=0 for linear)
  int n_used = 0;
};

// From the (1, log10 f, log10^2 f) basis to the (log10 P - 2.3) polynomial:
// with log10 f = -(y + 2.3), a2 = alpha3, a1 = 4.6*alpha3 - alpha2,
// a0 = 5.29*alpha3 - 2.3*alpha2 + alpha1.
inline Eigen::Vector3d alpha_to_a(const Eigen::Vector3d& alpha) {
  return {5.29 * alpha(2) - 2.3 * alpha(1) + alpha(0), 4.6 * alpha(2) - alpha(1), alpha(2)};
}

inline Eigen::Vector3d a_to_alpha(const Eigen::Vector3d& a) {
  return {a(0) - 2.3 * a(1) + 5.29 * a(2), 4.6 * a(2) - a(1), a(2)};
}

namespace detail {

inline PLRFit plr_least_squares(const std::vector<double>& periods, const std::vector<double>& mags,
                                const std::vector<double>& weights, int degree) {
  const int n = static_cast<int>(periods.size());
  const int p = degree + 1;
  Eigen::MatrixXd X(n, p);
  Eigen::VectorXd y(n), w(n);
  for (int i = 0; i < n; ++i) {
    const double yi = std::log10(periods[i]) - 2.3;
    for (int j = 0; j < p; ++j) X(i, j) = std::pow(yi, j);
    y(i) = mags[i];
    w(i) = weights.empty() ? 1.0 : weights[i];
  }
  const Eigen::MatrixXd Xw = w.cwiseSqrt().asDiagonal() * X;
  const Eigen::VectorXd yw = w.cwiseSqrt().asDiagonal() * y;
  Eigen::MatrixXd XtX = Xw.transpose() * Xw;
  Eigen::LLT<Eigen::MatrixXd> llt(XtX);
  if (llt.info() != Eigen::Success) throw validation_error("plr fit: rank-deficient design");
  const Eigen::VectorXd coef = llt.solve(Xw.transpose() * yw);

  const Eigen::VectorXd resid = yw - Xw * coef;
  const int dof = n - p;
  const double s2 = dof > 0 ? resid.squaredNorm() / dof : 0.0;
  const Eigen::MatrixXd cov = s2 * llt.solve(Eigen::MatrixXd::Identity(p, p));

  PLRFit fit;
  fit.a0 = coef(0);
  fit.a1 = p > 1 ? coef(1) : 0.0;
  fit.a2 = p > 2 ? coef(2) : 0.0;
  fit.sigma = std::sqrt(s2);
  for (int j = 0; j < p; ++j) fit.se(j) = std::sqrt(std::max(0.0, cov(j, j)));
  fit.n_used = n;
  return fit;
}

}  // namespace detail

inline PLRFit fit_quadratic_plr(const std::vector<double>& periods, const std::vector<double>& mags,
                                const std::vector<double>& weights = {}) {
  if (periods.size() != mags.size() || (!weights.empty() && weights.size() != periods.size()))
    throw validation_error("fit_quadratic_plr: input lengths mismatch");
  if (periods.size() < 3) throw validation_error("fit_quadratic_plr: need at least 3 points");
  return detail::plr_least_squares(periods, mags, weights, 2);
}

inline PLRFit fit_linear_plr(const std::vector<double>& periods, const std::vector<double>& mags,
                             double period_cut = 400.0) {
  if (periods.size() != mags.size()) throw validation_error("fit_linear_plr: input lengths mismatch");
  std::vector<double> p, m;
  for (std::size_t i = 0; i < periods.size(); ++i)
    if (periods[i] < period_cut) {
      p.push_back(periods[i]);
      m.push_back(mags[i]);
    }
  if (p.size() < 2) throw validation_error("fit_linear_plr: fewer than 2 points under the period cut");
  return detail::plr_least_squares(p, m, {}, 1);
}

// Flux-averaged magnitude of a densely sampled signal curve:
// m' = -2.5 log10( mean of 10^{-0.4 s(t)} ).
inline double flux_mean_magnitude(const std::vector<double>& signal) {
  if (signal.empty()) throw validation_error("flux_mean_magnitude: empty signal");
  double l = 0.0;
  for (double s : signal) l += std::pow(10.0, -0.4 * s);
  l /= signal.size();
  return -2.5 * std::log10(l);
}

inline double flux_average_correction(const std::vector<double>& signal, double m_hat) {
  return flux_mean_magnitude(signal) - m_hat;
}

struct Quantity {
  double value = 0.0;
  double err = 0.0;
};

struct DistanceLedger {
  Quantity delta_a0, delta_mbar, delta_Alambda, delta_ct;
  Quantity delta_mu, mu_anchor, mu_target;
};

// delta_mu = sum of the four corrections; mu_target = mu_anchor + delta_mu;
// uncertainties combine in quadrature at each stage.
inline DistanceLedger distance_modulus(Quantity delta_a0, Quantity delta_mbar, Quantity delta_Alambda,
                                       Quantity delta_ct, Quantity mu_anchor) {
  for (const auto& q : {delta_a0, delta_mbar, delta_Alambda, delta_ct, mu_anchor})
    if (!std::isfinite(q.value) || !std::isfinite(q.err))
      throw validation_error("distance_modulus: non-finite input");
  DistanceLedger l;
  l.delta_a0 = delta_a0;
  l.delta_mbar = delta_mbar;
  l.delta_Alambda = delta_Alambda;
  l.delta_ct = delta_ct;
  l.mu_anchor = mu_anchor;
  l.delta_mu.value = delta_a0.value + delta_mbar.value + delta_Alambda.value + delta_ct.value;
  l.delta_mu.err = std::sqrt(delta_a0.err * delta_a0.err + delta_mbar.err * delta_mbar.err +
                             delta_Alambda.err * delta_Alambda.err + delta_ct.err * delta_ct.err);
  l.mu_target.value = mu_anchor.value + l.delta_mu.value;
  l.mu_target.err = std::sqrt(mu_anchor.err * mu_anchor.err + l.delta_mu.err * l.delta_mu.err);
  return l;
}

}  // namespace periodplr
