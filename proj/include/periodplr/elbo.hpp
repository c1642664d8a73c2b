#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "periodplr/global.hpp"
#include "periodplr/local.hpp"

namespace periodplr {

namespace detail {

// Global moments the per-star ELBO terms need beyond ExpectedGlobals.
struct GlobalLogMoments {
  std::vector<double> gamma_mean_log;
  double omega_mean_logdet = 0.0;
};

inline GlobalLogMoments global_log_moments(const GlobalState& gs) {
  GlobalLogMoments lm;
  for (const auto& g : gs.gamma) lm.gamma_mean_log.push_back(gamma_mean_log(g));
  lm.omega_mean_logdet = wishart_mean_logdet(gs.omega);
  return lm;
}

// E_q log p(y, theta, f_k | globals) + H(q(theta | f_k)) at one grid node.
inline double elbo_node(const StarLightCurve& star, const GaussianCanonical& theta, double f,
                        const ExpectedGlobals& eg, const GlobalLogMoments& lm,
                        const std::vector<KernelParams>& kernels, const ThetaLayout& layout) {
  const int B = layout.B;
  const auto mom = gaussian_moments(theta);
  const Eigen::Vector3d d = plr_basis(f);
  double total = 0.0;

  for (int b = 0; b < B; ++b) {
    auto cols = band_columns(star, b);
    if (!cols.t.empty()) {
      const auto bundle = build_sigma(cols.t, f, cols.s, kernels[b]);
      const auto C = basis_matrix(cols.t, f);
      const auto wp = whiten_products(bundle, cols.y, C);
      const Eigen::Vector3d mu_b = mom.mean.segment<3>(3 * b);
      const Eigen::Matrix3d sec_b = mom.second.block<3, 3>(3 * b, 3 * b);
      total += -0.5 * (cols.t.size() * std::log(2.0 * M_PI) + bundle.logdet + wp.ySy -
                       2.0 * mu_b.dot(wp.CSy) + (wp.CSC.array() * sec_b.array()).sum());
    }
    // mean-magnitude prior: m_b | f, alpha_b, gamma_b
    const int ms = layout.mean_slot(b);
    const double sq = mom.second(ms, ms) - 2.0 * mom.mean(ms) * d.dot(eg.alpha_mean[b]) +
                      d.dot(eg.alpha_second[b] * d);
    total += -0.5 * std::log(2.0 * M_PI) + 0.5 * lm.gamma_mean_log[b] - 0.5 * eg.gamma_mean[b] * sq;
  }

  // beta prior: beta | Omega
  Eigen::MatrixXd beta_second(2 * B, 2 * B);
  for (int b = 0; b < B; ++b)
    for (int bp = 0; bp < B; ++bp)
      for (int c = 0; c < 2; ++c)
        for (int cp = 0; cp < 2; ++cp)
          beta_second(ThetaLayout::beta_pack(b, c), ThetaLayout::beta_pack(bp, cp)) =
              mom.second(layout.beta_slot(b, c), layout.beta_slot(bp, cp));
  total += -B * std::log(2.0 * M_PI) + 0.5 * lm.omega_mean_logdet -
           0.5 * (eg.omega_mean.array() * beta_second.array()).sum();

  return total + gaussian_entropy(theta);
}

}  // namespace detail

// Rectangle-rule ELBO at the variational state (gs, locals). The locals
// must carry stored per-node thetas and must have been computed under gs
// for the value to be the bound at that state. The improper Omega prior
// contributes only its parameter-dependent part, so the value is defined
// up to an additive constant; differences across sweeps are exact.
inline double elbo_estimate(const Dataset& dataset, const GlobalState& gs,
                            const std::vector<LocalPosterior>& locals, const HyperParams& hp,
                            const std::vector<KernelParams>& kernels) {
  if (static_cast<int>(locals.size()) != dataset.size())
    throw validation_error("elbo_estimate: one LocalPosterior per star required");
  const int B = dataset.band_count;
  const auto layout = theta_layout(B);
  const auto eg = expected_globals(gs);
  const auto lm = detail::global_log_moments(gs);

  double elbo = 0.0;
  for (int i = 0; i < dataset.size(); ++i) {
    const auto& lp = locals[i];
    if (lp.theta_at.empty()) throw validation_error("elbo_estimate: locals need stored thetas");
    const double df = lp.grid.delta();
    for (int k = 0; k < lp.grid.n_points; ++k) {
      const double w = lp.density(k) * df;
      if (w <= 0.0) continue;
      const double node = detail::elbo_node(dataset.stars[i], lp.theta_at[k], lp.grid.value(k), eg,
                                            lm, kernels, layout);
      elbo += w * (node - std::log(lp.density(k)));  // includes -E log q(f)
    }
    elbo += -std::log(lp.grid.f_max - lp.grid.f_min);  // uniform f prior
  }

  // global priors and entropies
  for (int b = 0; b < B; ++b) {
    const auto am = gaussian_moments(gs.alpha[b]);
    const double dev = am.cov.trace() + (am.mean - Eigen::VectorXd(hp.alpha_bar[b])).squaredNorm();
    elbo += -1.5 * std::log(2.0 * M_PI) + 1.5 * std::log(hp.delta_bar) - 0.5 * hp.delta_bar * dev;
    elbo += gaussian_entropy(gs.alpha[b]);

    const double a0 = hp.gamma_bar[b] * hp.r_bar;
    elbo += a0 * std::log(hp.r_bar) - std::lgamma(a0) + (a0 - 1.0) * gamma_mean_log(gs.gamma[b]) -
            hp.r_bar * gamma_mean(gs.gamma[b]);
    elbo += gamma_entropy(gs.gamma[b]);
  }

  Eigen::LLT<Eigen::MatrixXd> llt(hp.omega_bar);
  if (llt.info() != Eigen::Success) throw validation_error("elbo_estimate: omega_bar not SPD");
  const Eigen::MatrixXd prior_prec = hp.n_bar * llt.solve(Eigen::MatrixXd::Identity(2 * B, 2 * B));
  elbo += 0.5 * (hp.n_bar - 2.0 * B - 1.0) * lm.omega_mean_logdet -
          0.5 * (prior_prec.array() * wishart_mean(gs.omega).array()).sum();
  elbo += wishart_entropy(gs.omega);

  return elbo;
}

}  // namespace periodplr
