#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "periodplr/local.hpp"

namespace periodplr {

using FrequencyInterval = std::pair<double, double>;

struct StarEstimate {
  std::string star_id;
  double f_hat = 0.0;
  double p_hat = 0.0;
  double sigma_p = 0.0;
  Eigen::VectorXd m_hat;  // per band, posterior mean at the MAP slice
  std::map<double, std::vector<FrequencyInterval>> conf_sets;
};

inline double map_frequency(const LocalPosterior& lp) {
  int best = 0;
  for (int k = 1; k < lp.grid.n_points; ++k)
    if (lp.density(k) > lp.density(best)) best = k;  // first index on ties
  return lp.grid.value(best);
}

// sigma(p_hat) from the rectangle-rule moments of 1/f under q.
inline double period_uncertainty(const LocalPosterior& lp) {
  const double df = lp.grid.delta();
  double m1 = 0.0, m2 = 0.0;
  for (int k = 0; k < lp.grid.n_points; ++k) {
    const double p = 1.0 / lp.grid.value(k);
    const double w = lp.density(k) * df;
    m1 += w * p;
    m2 += w * p * p;
  }
  return std::sqrt(std::max(0.0, m2 - m1 * m1));
}

// Highest-density set {f : q(f) > c}: nodes sorted by density descending
// until the accumulated mass reaches the level, returned as maximal runs
// padded by half a grid cell.
inline std::vector<FrequencyInterval> confidence_set(const LocalPosterior& lp, double level) {
  if (!(level > 0.0 && level < 1.0)) throw validation_error("confidence_set: level must lie in (0,1)");
  const int n = lp.grid.n_points;
  const double df = lp.grid.delta();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return lp.density(a) > lp.density(b); });

  std::vector<char> in(n, 0);
  double mass = 0.0;
  for (int k : order) {
    in[k] = 1;
    mass += lp.density(k) * df;
    if (mass >= level) break;
  }

  std::vector<FrequencyInterval> intervals;
  for (int k = 0; k < n; ++k) {
    if (!in[k]) continue;
    int j = k;
    while (j + 1 < n && in[j + 1]) ++j;
    intervals.emplace_back(lp.grid.value(k) - 0.5 * df, lp.grid.value(j) + 0.5 * df);
    k = j;
  }
  return intervals;
}

inline double recovery_rate(const std::vector<double>& estimates, const std::vector<double>& truths,
                            double lambda = 2.7e-4) {
  if (estimates.size() != truths.size() || estimates.empty())
    throw validation_error("recovery_rate: estimate/truth lengths mismatch");
  int hits = 0;
  for (std::size_t i = 0; i < estimates.size(); ++i)
    if (std::abs(estimates[i] - truths[i]) <= lambda) ++hits;
  return static_cast<double>(hits) / estimates.size();
}

inline double ade(const std::vector<double>& estimates, const std::vector<double>& truths) {
  if (estimates.size() != truths.size() || estimates.empty())
    throw validation_error("ade: estimate/truth lengths mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i) s += std::abs(estimates[i] - truths[i]);
  return s / estimates.size();
}

struct CoverageResult {
  double coverage = 0.0;   // fraction of truths inside any interval
  double near_miss = 0.0;  // among misses: within lambda of the nearest interval
};

inline CoverageResult coverage(const std::vector<std::vector<FrequencyInterval>>& conf_sets,
                               const std::vector<double>& truths, double lambda_slack = 2.7e-4) {
  if (conf_sets.size() != truths.size() || truths.empty())
    throw validation_error("coverage: aligned lists required");
  int covered = 0, near = 0, missed = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const double f0 = truths[i];
    double dist = std::numeric_limits<double>::infinity();
    bool inside = false;
    for (const auto& [lo, hi] : conf_sets[i]) {
      if (f0 >= lo && f0 <= hi) {
        inside = true;
        break;
      }
      dist = std::min(dist, f0 < lo ? lo - f0 : f0 - hi);
    }
    if (inside) {
      ++covered;
    } else {
      ++missed;
      if (dist <= lambda_slack) ++near;
    }
  }
  CoverageResult r;
  r.coverage = static_cast<double>(covered) / truths.size();
  r.near_miss = missed > 0 ? static_cast<double>(near) / missed : 0.0;
  return r;
}

// MAP signal curve: mean + sinusoid + GP posterior mean of h conditioned
// on the sinusoid residuals with covariance Sigma_ib.
inline std::vector<std::pair<double, double>> fit_signal_curve(
    const StarLightCurve& star, int b, double f_hat, const Eigen::VectorXd& theta_mean,
    const KernelParams& kernel, const std::vector<double>& dense_times) {
  const auto layout = theta_layout(star.band_count());
  const double m_hat = theta_mean(layout.mean_slot(b));
  const Eigen::Vector2d beta(theta_mean(layout.beta_slot(b, 0)), theta_mean(layout.beta_slot(b, 1)));

  auto cols = detail::band_columns(star, b);
  Eigen::VectorXd weights;  // Sigma^{-1} residuals
  if (!cols.t.empty()) {
    const auto bundle = build_sigma(cols.t, f_hat, cols.s, kernel);
    const auto C = basis_matrix(cols.t, f_hat);
    const Eigen::VectorXd resid = cols.y - m_hat * Eigen::VectorXd::Ones(cols.y.size()) -
                                  C.rightCols<2>() * beta;
    const Eigen::VectorXd half = bundle.chol.triangularView<Eigen::Lower>().solve(resid);
    weights = bundle.chol.transpose().triangularView<Eigen::Upper>().solve(half);
  }

  std::vector<std::pair<double, double>> out;
  out.reserve(dense_times.size());
  for (double t : dense_times) {
    const double u = f_hat * t;
    double s = m_hat + beta(0) * std::cos(2.0 * M_PI * u) + beta(1) * std::sin(2.0 * M_PI * u);
    for (std::size_t j = 0; j < cols.t.size(); ++j)
      s += kernel_eval(u, f_hat * cols.t[j], kernel) * weights(j);
    out.emplace_back(t, s);
  }
  return out;
}

inline StarEstimate make_star_estimate(const StarLightCurve& star, const LocalPosterior& lp,
                                       const std::vector<double>& levels = {0.95}) {
  const auto layout = theta_layout(star.band_count());
  StarEstimate est;
  est.star_id = star.star_id;
  est.f_hat = map_frequency(lp);
  est.p_hat = 1.0 / est.f_hat;
  est.sigma_p = period_uncertainty(lp);
  const auto mom = gaussian_moments(lp.theta_map);
  est.m_hat.resize(layout.B);
  for (int b = 0; b < layout.B; ++b) est.m_hat(b) = mom.mean(layout.mean_slot(b));
  for (double lv : levels) est.conf_sets[lv] = confidence_set(lp, lv);
  return est;
}

inline void save_estimates_csv(const std::vector<StarEstimate>& estimates,
                               const std::vector<std::string>& band_names, const std::string& path,
                               const std::string& header_comment = "") {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write estimates file: " + path);
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  out << "star_id,f_hat,p_hat,sigma_p";
  for (const auto& b : band_names) out << ",m_hat_" << b;
  out << ",conf_sets\n";
  out.precision(12);
  for (const auto& e : estimates) {
    out << e.star_id << ',' << e.f_hat << ',' << e.p_hat << ',' << e.sigma_p;
    for (int b = 0; b < e.m_hat.size(); ++b) out << ',' << e.m_hat(b);
    out << ',';
    bool first_level = true;
    for (const auto& [lv, intervals] : e.conf_sets) {
      if (!first_level) out << '|';
      first_level = false;
      out << lv << '=';
      for (std::size_t i = 0; i < intervals.size(); ++i) {
        if (i) out << ';';
        out << intervals[i].first << ':' << intervals[i].second;
      }
    }
    out << '\n';
  }
}

inline std::vector<StarEstimate> load_estimates_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open estimates file: " + path);
  std::vector<StarEstimate> out;
  std::string line;
  bool header_seen = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    std::vector<std::string> fields;
    std::istringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() < 5) throw io_error("malformed estimates row at line " + std::to_string(line_no));
    StarEstimate e;
    try {
      e.star_id = fields[0];
      e.f_hat = std::stod(fields[1]);
      e.p_hat = std::stod(fields[2]);
      e.sigma_p = std::stod(fields[3]);
      const int nb = static_cast<int>(fields.size()) - 5;
      e.m_hat.resize(nb);
      for (int b = 0; b < nb; ++b) e.m_hat(b) = std::stod(fields[4 + b]);
      // conf_sets field: level=lo:hi;lo:hi|level=...
      std::istringstream cs(fields.back());
      std::string level_part;
      while (std::getline(cs, level_part, '|')) {
        if (level_part.empty()) continue;
        const auto eq = level_part.find('=');
        if (eq == std::string::npos) throw io_error("bad conf_sets at line " + std::to_string(line_no));
        const double level = std::stod(level_part.substr(0, eq));
        std::vector<FrequencyInterval> intervals;
        std::istringstream is(level_part.substr(eq + 1));
        std::string iv;
        while (std::getline(is, iv, ';')) {
          const auto colon = iv.find(':');
          if (colon == std::string::npos) throw io_error("bad interval at line " + std::to_string(line_no));
          intervals.emplace_back(std::stod(iv.substr(0, colon)), std::stod(iv.substr(colon + 1)));
        }
        e.conf_sets[level] = std::move(intervals);
      }
    } catch (const io_error&) {
      throw;
    } catch (const std::exception&) {
      throw io_error("unparsable estimates field at line " + std::to_string(line_no));
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace periodplr
