#pragma once

#include <random>
#include <vector>

#include <Eigen/Dense>

#include "periodplr/local.hpp"

namespace testutil {

using namespace periodplr;

// Random multi-band star with sinusoid + noise magnitudes.
inline StarLightCurve random_star(std::mt19937_64& rng, int B, int max_obs_per_band,
                                  double f0 = 0.004, double base_mag = 18.0) {
  std::uniform_real_distribution<double> ut(0.0, 1200.0), us(0.05, 0.25);
  std::normal_distribution<double> gauss(0.0, 1.0);
  StarLightCurve star;
  star.star_id = "rnd";
  star.bands.resize(B);
  for (int b = 0; b < B; ++b) {
    const int n = 3 + static_cast<int>(rng() % std::max(1, max_obs_per_band - 2));
    std::vector<double> times;
    for (int j = 0; j < n; ++j) times.push_back(ut(rng));
    std::sort(times.begin(), times.end());
    for (double t : times) {
      BandObservation o;
      o.t = t;
      o.sigma = us(rng);
      o.y = base_mag + 0.4 * std::cos(2 * M_PI * f0 * t) + 0.2 * std::sin(2 * M_PI * f0 * t) +
            o.sigma * gauss(rng);
      star.bands[b].push_back(o);
    }
  }
  return star;
}

// Exact log marginal density of f under point-mass globals, by direct
// Gaussian marginalization of theta: y | f ~ N(C theta0, blkdiag(Sigma_b)
// + C Theta^{-1} C^T). Independent dense-algebra oracle for update_local.
inline Eigen::VectorXd exact_log_marginal(const StarLightCurve& star, const FrequencyGrid& grid,
                                          const ExpectedGlobals& eg,
                                          const std::vector<KernelParams>& kernels) {
  const int B = star.band_count();
  const auto layout = theta_layout(B);
  Eigen::VectorXd out(grid.n_points);

  int n_total = 0;
  for (int b = 0; b < B; ++b) n_total += star.n_obs(b);

  for (int k = 0; k < grid.n_points; ++k) {
    const double f = grid.value(k);
    auto [theta0, Theta] = prior_theta(f, eg, layout);
    const Eigen::MatrixXd Theta_inv = Theta.inverse();

    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(n_total, layout.dim());
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n_total, n_total);
    Eigen::VectorXd y(n_total);
    int row = 0;
    for (int b = 0; b < B; ++b) {
      const int n = star.n_obs(b);
      if (n == 0) continue;
      std::vector<double> t, s;
      for (const auto& o : star.bands[b]) {
        t.push_back(o.t);
        s.push_back(o.sigma);
      }
      C.block(row, 3 * b, n, 3) = basis_matrix(t, f);
      S.block(row, row, n, n) = build_sigma(t, f, s, kernels[b]).sigma;
      for (int j = 0; j < n; ++j) y(row + j) = star.bands[b][j].y;
      row += n;
    }

    const Eigen::MatrixXd cov = S + C * Theta_inv * C.transpose();
    const Eigen::VectorXd mu = C * theta0;
    const Eigen::MatrixXd cov_inv = cov.inverse();
    const double logdet = std::log(cov.determinant());
    out(k) = -0.5 * (n_total * std::log(2 * M_PI) + logdet + (y - mu).dot(cov_inv * (y - mu)));
  }
  return out;
}

// Normalize log values to a grid log density under the rectangle rule.
inline Eigen::VectorXd normalize_log_density(const Eigen::VectorXd& logv, double delta) {
  const double m = logv.maxCoeff();
  const double mass = ((logv.array() - m).exp().sum()) * delta;
  return (logv.array() - m - std::log(mass)).matrix();
}

}  // namespace testutil
