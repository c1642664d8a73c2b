#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "periodplr/kernel.hpp"
#include "periodplr/lightcurve.hpp"
#include "periodplr/optim.hpp"
#include "periodplr/rng.hpp"

namespace periodplr {

// Profile objective per grid frequency; higher is better (score = -RSS).
struct Periodogram {
  FrequencyGrid grid;
  Eigen::VectorXd score;
  double best_f = 0.0;
};

namespace detail {

struct GlsFit {
  Eigen::Vector3d coef;  // (mean, cos, sin)
  double rss = 0.0;      // weighted
  bool ok = false;
};

// Weighted least squares of y on (1, cos 2*pi*f*t, sin 2*pi*f*t),
// weights 1/sigma^2, via the 3x3 normal equations.
inline GlsFit gls_fit_at(const std::vector<BandObservation>& obs, double f) {
  GlsFit fit;
  Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
  Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
  double yWy = 0.0;
  for (const auto& o : obs) {
    const double w = 1.0 / (o.sigma * o.sigma);
    const double u = 2.0 * M_PI * f * o.t;
    const Eigen::Vector3d c(1.0, std::cos(u), std::sin(u));
    A += w * c * c.transpose();
    rhs += w * o.y * c;
    yWy += w * o.y * o.y;
  }
  Eigen::LLT<Eigen::Matrix3d> llt(A);
  if (llt.info() != Eigen::Success) return fit;  // rank deficient at this f
  fit.coef = llt.solve(rhs);
  fit.rss = std::max(0.0, yWy - rhs.dot(fit.coef));
  fit.ok = true;
  return fit;
}

}  // namespace detail

inline Periodogram gls(const std::vector<BandObservation>& obs, const FrequencyGrid& grid) {
  grid.validate();
  if (static_cast<int>(obs.size()) < 4)
    throw validation_error("gls: need at least 4 observations (mean + 2 coefficients + 1 dof)");
  Periodogram pg;
  pg.grid = grid;
  pg.score.resize(grid.n_points);
  int best = 0;
  for (int k = 0; k < grid.n_points; ++k) {
    const auto fit = detail::gls_fit_at(obs, grid.value(k));
    pg.score(k) = fit.ok ? -fit.rss : -std::numeric_limits<double>::infinity();
    if (pg.score(k) > pg.score(best)) best = k;
  }
  pg.best_f = grid.value(best);
  return pg;
}

// Shared frequency, band-specific mean/amplitude/phase; bands with fewer
// than 4 points carry no frequency information here and are skipped.
inline Periodogram mgls(const StarLightCurve& star, const FrequencyGrid& grid) {
  grid.validate();
  std::vector<int> usable;
  for (int b = 0; b < star.band_count(); ++b)
    if (star.n_obs(b) >= 4) usable.push_back(b);
  if (usable.empty()) throw validation_error("mgls: no band with >= 4 observations for star " + star.star_id);

  Periodogram pg;
  pg.grid = grid;
  pg.score.resize(grid.n_points);
  int best = 0;
  for (int k = 0; k < grid.n_points; ++k) {
    double total = 0.0;
    bool ok = true;
    for (int b : usable) {
      const auto fit = detail::gls_fit_at(star.bands[b], grid.value(k));
      if (!fit.ok) {
        ok = false;
        break;
      }
      total += fit.rss;
    }
    pg.score(k) = ok ? -total : -std::numeric_limits<double>::infinity();
    if (pg.score(k) > pg.score(best)) best = k;
  }
  pg.best_f = grid.value(best);
  return pg;
}

// Robust per-band PLR intercepts given fixed slopes: MGLS frequency and
// fitted mean per star, then the median of m_hat - slope terms (the L1
// solution for an intercept-only fit).
inline std::vector<std::optional<double>> init_alpha_intercepts(const Dataset& subset,
                                                                const FrequencyGrid& grid,
                                                                const std::vector<double>& slope1,
                                                                const std::vector<double>& slope2) {
  if (subset.size() == 0) throw validation_error("init_alpha_intercepts: empty subset");
  const int B = subset.band_count;
  if (static_cast<int>(slope1.size()) != B || static_cast<int>(slope2.size()) != B)
    throw validation_error("init_alpha_intercepts: need one slope pair per band");

  std::vector<std::vector<double>> residuals(B);
  for (const auto& star : subset.stars) {
    Periodogram pg;
    try {
      pg = mgls(star, grid);
    } catch (const validation_error&) {
      continue;  // star has no usable band
    }
    const double lf = std::log10(pg.best_f);
    for (int b = 0; b < B; ++b) {
      if (star.n_obs(b) < 4) continue;
      const auto fit = detail::gls_fit_at(star.bands[b], pg.best_f);
      if (!fit.ok) continue;
      residuals[b].push_back(fit.coef(0) - slope1[b] * lf - slope2[b] * lf * lf);
    }
  }

  std::vector<std::optional<double>> intercepts(B);
  for (int b = 0; b < B; ++b) {
    auto& r = residuals[b];
    if (r.empty()) continue;  // flagged missing
    std::sort(r.begin(), r.end());
    const std::size_t n = r.size();
    intercepts[b] = (n % 2 == 1) ? r[n / 2] : 0.5 * (r[n / 2 - 1] + r[n / 2]);
  }
  return intercepts;
}

// One sinusoid-residual curve on the phase axis.
struct ResidualCurve {
  std::vector<double> phases;
  Eigen::VectorXd residuals;
  std::vector<double> sigmas;
};

namespace detail {

inline double gp_negloglik(const std::vector<ResidualCurve>& curves, const KernelParams& k) {
  double nll = 0.0;
  for (const auto& c : curves) {
    const auto bundle = build_sigma(c.phases, 1.0, c.sigmas, k);  // f=1: times are phases
    auto L = bundle.chol.triangularView<Eigen::Lower>();
    const Eigen::VectorXd a = L.solve(c.residuals);
    nll += 0.5 * (a.squaredNorm() + bundle.logdet + c.phases.size() * std::log(2.0 * M_PI));
  }
  return nll;
}

}  // namespace detail

// Pooled GP marginal MLE for (tau1, tau2, tau3) in log space with box
// bounds [e^-15, e^5], multi-start Nelder-Mead.
inline KernelParams fit_kernel_mle(const std::vector<ResidualCurve>& curves,
                                   std::uint64_t seed = 0, int n_starts = 6) {
  bool any = false;
  for (const auto& c : curves) {
    if (c.phases.size() != c.sigmas.size() || static_cast<int>(c.residuals.size()) != static_cast<int>(c.phases.size()))
      throw validation_error("fit_kernel_mle: curve array lengths mismatch");
    any = any || !c.phases.empty();
  }
  if (!any) throw validation_error("fit_kernel_mle: pooled residuals empty");

  const double lo = -15.0, hi = 5.0;
  auto objective = [&](const Eigen::VectorXd& x) -> double {
    for (int i = 0; i < 3; ++i)
      if (x(i) < lo || x(i) > hi) return std::numeric_limits<double>::infinity();
    KernelParams k{std::exp(x(0)), std::exp(x(1)), std::exp(x(2))};
    try {
      const double v = detail::gp_negloglik(curves, k);
      return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    } catch (const numerical_error&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  auto rng = make_stream(seed, 0x6d6cu);
  std::uniform_real_distribution<double> jitter(-2.0, 2.0);
  std::vector<Eigen::Vector3d> starts = {
      {std::log(0.01), std::log(0.05), std::log(0.01)},
      {std::log(0.1), std::log(0.5), std::log(0.1)},
      {std::log(0.001), std::log(0.01), std::log(0.001)},
  };
  while (static_cast<int>(starts.size()) < n_starts) {
    Eigen::Vector3d s = starts[starts.size() % 3];
    for (int i = 0; i < 3; ++i) s(i) = std::clamp(s(i) + jitter(rng), lo, hi);
    starts.push_back(s);
  }

  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_x;
  for (const auto& s : starts) {
    if (!std::isfinite(objective(s))) continue;
    const auto res = nelder_mead(objective, s, 0.7, 400, 1e-10);
    if (res.value < best) {
      best = res.value;
      best_x = res.x;
    }
  }
  if (!std::isfinite(best))
    throw numerical_error("fit_kernel_mle: objective non-finite at every start point");
  return {std::exp(best_x(0)), std::exp(best_x(1)), std::exp(best_x(2))};
}

inline void save_periodogram(const Periodogram& pg, const std::string& path,
                             const std::string& header_comment = "") {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write periodogram file: " + path);
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  out << "f,score\n";
  out.precision(17);
  for (int k = 0; k < pg.grid.n_points; ++k) out << pg.grid.value(k) << ',' << pg.score(k) << '\n';
}

}  // namespace periodplr
