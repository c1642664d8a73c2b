#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "periodplr/expfam.hpp"
#include "periodplr/kernel.hpp"
#include "periodplr/lightcurve.hpp"

namespace periodplr {

// PLR basis d(f) = (1, log10 f, log10^2 f).
inline Eigen::Vector3d plr_basis(double f) {
  const double lf = std::log10(f);
  return Eigen::Vector3d(1.0, lf, lf * lf);
}

// Moments of the global factors consumed by the local step.
struct ExpectedGlobals {
  std::vector<Eigen::Vector3d> alpha_mean;    // E alpha_b
  std::vector<Eigen::Matrix3d> alpha_second;  // E alpha_b alpha_b^T
  std::vector<double> gamma_mean;             // E gamma_b
  Eigen::MatrixXd omega_mean;                 // E Omega, 2B x 2B

  int band_count() const { return static_cast<int>(alpha_mean.size()); }
};

// Point-mass globals (zero-variance limit); used by oracle tests.
inline ExpectedGlobals point_mass_globals(const std::vector<Eigen::Vector3d>& alpha,
                                          const std::vector<double>& gamma,
                                          const Eigen::MatrixXd& omega) {
  ExpectedGlobals eg;
  eg.alpha_mean = alpha;
  for (const auto& a : alpha) eg.alpha_second.push_back(a * a.transpose());
  eg.gamma_mean = gamma;
  eg.omega_mean = omega;
  return eg;
}

// Prior mean and expected precision of theta | f under the globals.
// Mean-magnitude slots carry d(f)^T E[alpha_b]; beta slots are zero.
// E[Theta] is block diagonal: diag(E gamma_b) on the mean slots and
// E[Omega] on the beta slots.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> prior_theta(double f, const ExpectedGlobals& eg,
                                                               const ThetaLayout& layout) {
  const int B = layout.B;
  const Eigen::Vector3d d = plr_basis(f);
  Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(layout.dim());
  Eigen::MatrixXd E_Theta = Eigen::MatrixXd::Zero(layout.dim(), layout.dim());
  for (int b = 0; b < B; ++b) {
    theta0(layout.mean_slot(b)) = d.dot(eg.alpha_mean[b]);
    E_Theta(layout.mean_slot(b), layout.mean_slot(b)) = eg.gamma_mean[b];
    for (int bp = 0; bp < B; ++bp)
      for (int c = 0; c < 2; ++c)
        for (int cp = 0; cp < 2; ++cp)
          E_Theta(layout.beta_slot(b, c), layout.beta_slot(bp, cp)) =
              eg.omega_mean(ThetaLayout::beta_pack(b, c), ThetaLayout::beta_pack(bp, cp));
  }
  return {std::move(theta0), std::move(E_Theta)};
}

namespace detail {

struct BandColumns {
  std::vector<double> t, s;
  Eigen::VectorXd y;
};

inline BandColumns band_columns(const StarLightCurve& star, int b) {
  BandColumns c;
  const auto& obs = star.bands[b];
  c.t.reserve(obs.size());
  c.s.reserve(obs.size());
  c.y.resize(obs.size());
  for (std::size_t j = 0; j < obs.size(); ++j) {
    c.t.push_back(obs[j].t);
    c.s.push_back(obs[j].sigma);
    c.y(j) = obs[j].y;
  }
  return c;
}

}  // namespace detail

struct LocalEval {
  GaussianCanonical theta;  // q(theta | f)
  double log_g = 0.0;       // log of the unnormalized q(f)
};

// One grid-point evaluation: the conditional Gaussian q(theta|f) and the
// unnormalized log density of f, sharing the per-band Cholesky bundles.
inline LocalEval evaluate_local(const StarLightCurve& star, double f, const ExpectedGlobals& eg,
                                const std::vector<KernelParams>& kernels, const ThetaLayout& layout) {
  const int B = layout.B;
  auto [theta0, E_Theta] = prior_theta(f, eg, layout);
  const Eigen::Vector3d d = plr_basis(f);

  Eigen::MatrixXd eta1 = -0.5 * E_Theta;
  Eigen::VectorXd eta2 = E_Theta * theta0;
  double data_terms = 0.0;  // sum_b [ y^T Sigma^{-1} y + log det Sigma ]
  for (int b = 0; b < B; ++b) {
    auto cols = detail::band_columns(star, b);
    if (cols.t.empty()) continue;
    const auto bundle = build_sigma(cols.t, f, cols.s, kernels[b]);
    const auto C = basis_matrix(cols.t, f);
    const auto wp = whiten_products(bundle, cols.y, C);
    eta1.block<3, 3>(3 * b, 3 * b) -= 0.5 * wp.CSC;
    eta2.segment<3>(3 * b) += wp.CSy;
    data_terms += wp.ySy + bundle.logdet;
  }

  Eigen::MatrixXd M = -(0.5 * (eta1 + eta1.transpose()));  // positive definite
  Eigen::LLT<Eigen::MatrixXd> llt(M);
  if (llt.info() != Eigen::Success)
    throw numerical_error("evaluate_local: -eta1 not positive definite for star " + star.star_id);
  double logdet_neg_eta1 = 0.0;
  for (int i = 0; i < layout.dim(); ++i) logdet_neg_eta1 += 2.0 * std::log(llt.matrixL()(i, i));

  double prior_quad = 0.0;  // <E Theta, E_{q(alpha)} theta0 theta0^T>
  for (int b = 0; b < B; ++b) prior_quad += eg.gamma_mean[b] * d.dot(eg.alpha_second[b] * d);

  const double quad = -0.5 * eta2.dot(llt.solve(eta2));  // 1/2 eta2^T eta1^{-1} eta2
  const double g = quad + prior_quad + data_terms;

  LocalEval ev;
  ev.theta = {std::move(eta1), std::move(eta2)};
  ev.log_g = -0.5 * g - 0.5 * logdet_neg_eta1;
  return ev;
}

inline GaussianCanonical local_theta_canonical(const StarLightCurve& star, double f,
                                               const ExpectedGlobals& eg,
                                               const std::vector<KernelParams>& kernels,
                                               const ThetaLayout& layout) {
  return evaluate_local(star, f, eg, kernels, layout).theta;
}

inline double local_log_g(const StarLightCurve& star, double f, const ExpectedGlobals& eg,
                          const std::vector<KernelParams>& kernels, const ThetaLayout& layout) {
  return evaluate_local(star, f, eg, kernels, layout).log_g;
}

// Free-form q(f) on the grid plus the conditional Gaussian at the MAP
// node. Per-node theta parameters are kept only when store_theta is set
// (the SVI loop recomputes them at the sampled frequency instead).
struct LocalPosterior {
  FrequencyGrid grid;
  Eigen::VectorXd density;  // sums to 1/delta_f (rectangle rule mass 1)
  Eigen::VectorXd log_g;    // unnormalized log values
  int map_index = 0;
  GaussianCanonical theta_map;
  std::vector<GaussianCanonical> theta_at;  // optional, size n_points

  double map_frequency() const { return grid.value(map_index); }
};

inline LocalPosterior update_local(const StarLightCurve& star, const ExpectedGlobals& eg,
                                   const std::vector<KernelParams>& kernels, const FrequencyGrid& grid,
                                   const ThetaLayout& layout, bool store_theta = false) {
  grid.validate();
  LocalPosterior lp;
  lp.grid = grid;
  lp.log_g.resize(grid.n_points);
  if (store_theta) lp.theta_at.resize(grid.n_points);

  double best = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < grid.n_points; ++k) {
    LocalEval ev = evaluate_local(star, grid.value(k), eg, kernels, layout);
    lp.log_g(k) = ev.log_g;
    if (ev.log_g > best) {
      best = ev.log_g;
      lp.map_index = k;
      lp.theta_map = ev.theta;
    }
    if (store_theta) lp.theta_at[k] = std::move(ev.theta);
  }

  lp.density = (lp.log_g.array() - best).exp();
  const double mass = lp.density.sum() * grid.delta();
  if (!(mass > 0.0) || !std::isfinite(mass))
    throw numerical_error("update_local: density cannot be normalized for star " + star.star_id);
  lp.density /= mass;
  return lp;
}

inline int sample_frequency_index(const LocalPosterior& lp, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  const double df = lp.grid.delta();
  double acc = 0.0;
  for (int k = 0; k < lp.grid.n_points; ++k) {
    acc += lp.density(k) * df;
    if (u < acc) return k;
  }
  return lp.grid.n_points - 1;
}

inline double sample_frequency(const LocalPosterior& lp, std::mt19937_64& rng) {
  return lp.grid.value(sample_frequency_index(lp, rng));
}

inline void save_density(const LocalPosterior& lp, const std::string& path,
                         const std::string& header_comment = "") {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write density file: " + path);
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  out << "f,q\n";
  out.precision(17);
  for (int k = 0; k < lp.grid.n_points; ++k) out << lp.grid.value(k) << ',' << lp.density(k) << '\n';
}

}  // namespace periodplr
