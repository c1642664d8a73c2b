#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "periodplr/baselines.hpp"
#include "periodplr/estimates.hpp"
#include "periodplr/global.hpp"
#include "periodplr/plr.hpp"

namespace periodplr {

// Per-band intercept-only PLR with fixed slopes (a1, a2) in the
// y = log10(P) - 2.3 parameterization: a0 = mean residual, sigma = its SD.
struct InterceptFit {
  double a0 = 0.0;
  double sigma = 0.0;
  int n_used = 0;
};

inline InterceptFit fit_intercept_only(const std::vector<double>& periods,
                                       const std::vector<double>& mags, double a1, double a2) {
  if (periods.size() != mags.size() || periods.empty())
    throw validation_error("fit_intercept_only: input lengths mismatch");
  std::vector<double> r;
  for (std::size_t i = 0; i < periods.size(); ++i) {
    const double y = std::log10(periods[i]) - 2.3;
    r.push_back(mags[i] - a1 * y - a2 * y * y);
  }
  InterceptFit fit;
  fit.n_used = static_cast<int>(r.size());
  for (double v : r) fit.a0 += v;
  fit.a0 /= fit.n_used;
  double ss = 0.0;
  for (double v : r) ss += (v - fit.a0) * (v - fit.a0);
  fit.sigma = fit.n_used > 1 ? std::sqrt(ss / (fit.n_used - 1)) : 0.0;
  return fit;
}

namespace detail {

// (period, magnitude) pairs per band from the MGLS baseline.
inline std::vector<std::vector<std::pair<double, double>>> mgls_period_mags(const Dataset& ds,
                                                                            const FrequencyGrid& grid) {
  std::vector<std::vector<std::pair<double, double>>> out(ds.band_count);
  for (const auto& star : ds.stars) {
    Periodogram pg;
    try {
      pg = mgls(star, grid);
    } catch (const validation_error&) {
      continue;
    }
    for (int b = 0; b < ds.band_count; ++b) {
      if (star.n_obs(b) < 4) continue;
      const auto fit = gls_fit_at(star.bands[b], pg.best_f);
      if (fit.ok) out[b].emplace_back(1.0 / pg.best_f, fit.coef(0));
    }
  }
  return out;
}

inline std::vector<std::vector<std::pair<double, double>>> svi_period_mags(
    const Dataset& ds, const HyperParams& hp, const std::vector<KernelParams>& kernels,
    const FitConfig& config) {
  const auto result = run_svi(ds, hp, kernels, config);
  const auto layout = theta_layout(ds.band_count);
  std::vector<std::vector<std::pair<double, double>>> out(ds.band_count);
  for (int i = 0; i < ds.size(); ++i) {
    const double f_hat = map_frequency(result.locals[i]);
    const auto mom = gaussian_moments(result.locals[i].theta_map);
    for (int b = 0; b < ds.band_count; ++b)
      out[b].emplace_back(1.0 / f_hat, mom.mean(layout.mean_slot(b)));
  }
  return out;
}

inline std::vector<InterceptFit> intercepts_per_band(
    const std::vector<std::vector<std::pair<double, double>>>& pm, const std::vector<double>& a1,
    const std::vector<double>& a2) {
  std::vector<InterceptFit> fits(pm.size());
  for (std::size_t b = 0; b < pm.size(); ++b) {
    if (pm[b].empty()) continue;
    std::vector<double> periods, mags;
    for (const auto& [p, m] : pm[b]) {
      periods.push_back(p);
      mags.push_back(m);
    }
    fits[b] = fit_intercept_only(periods, mags, a1[b], a2[b]);
  }
  return fits;
}

}  // namespace detail

struct DownsampleSetting {
  int star_budget = 50;
  std::vector<int> caps;  // per band
  int replications = 5;
};

struct DownsampleRow {
  std::string method;
  int replication = 0;
  int band = 0;
  double intercept_shift = 0.0;  // a0(subsample) - a0(full)
  double sigma_ratio = 0.0;      // sigma(subsample) / sigma(full)
};

// Subsampling stability comparison: fixed-slope intercepts refit on
// downsampled copies against the full-sample fit, for MGLS and SVI.
inline std::vector<DownsampleRow> run_downsample_eval(const Dataset& full, const HyperParams& hp,
                                                      const std::vector<KernelParams>& kernels,
                                                      const FitConfig& config,
                                                      const DownsampleSetting& setting,
                                                      const std::vector<double>& slope_a1,
                                                      const std::vector<double>& slope_a2,
                                                      std::uint64_t seed) {
  const int B = full.band_count;
  if (static_cast<int>(slope_a1.size()) != B || static_cast<int>(slope_a2.size()) != B)
    throw validation_error("run_downsample_eval: need one fixed slope pair per band");

  const auto full_mgls =
      detail::intercepts_per_band(detail::mgls_period_mags(full, config.grid), slope_a1, slope_a2);
  const auto full_svi = detail::intercepts_per_band(
      detail::svi_period_mags(full, hp, kernels, config), slope_a1, slope_a2);

  std::vector<DownsampleRow> rows;
  for (int r = 1; r <= setting.replications; ++r) {
    const Dataset sub = downsample(full, setting.star_budget, setting.caps, mix_seed(seed, 0xd5, r));
    FitConfig sub_config = config;
    sub_config.seed = mix_seed(seed, 0x5f, r);

    const auto sub_mgls =
        detail::intercepts_per_band(detail::mgls_period_mags(sub, config.grid), slope_a1, slope_a2);
    const auto sub_svi = detail::intercepts_per_band(
        detail::svi_period_mags(sub, hp, kernels, sub_config), slope_a1, slope_a2);

    for (int b = 0; b < B; ++b) {
      if (sub_mgls[b].n_used > 0 && full_mgls[b].n_used > 0)
        rows.push_back({"MGLS", r, b, sub_mgls[b].a0 - full_mgls[b].a0,
                        full_mgls[b].sigma > 0 ? sub_mgls[b].sigma / full_mgls[b].sigma : 0.0});
      if (sub_svi[b].n_used > 0 && full_svi[b].n_used > 0)
        rows.push_back({"SVI", r, b, sub_svi[b].a0 - full_svi[b].a0,
                        full_svi[b].sigma > 0 ? sub_svi[b].sigma / full_svi[b].sigma : 0.0});
    }
  }
  return rows;
}

inline double median_abs_shift(const std::vector<DownsampleRow>& rows, const std::string& method) {
  std::vector<double> v;
  for (const auto& r : rows)
    if (r.method == method) v.push_back(std::abs(r.intercept_shift));
  if (v.empty()) throw validation_error("median_abs_shift: no rows for method " + method);
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace periodplr
