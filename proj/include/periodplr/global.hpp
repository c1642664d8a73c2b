#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "periodplr/expfam.hpp"
#include "periodplr/local.hpp"

namespace periodplr {

// Canonical parameters of the global mean-field factors.
struct GlobalState {
  std::vector<GaussianCanonical> alpha;  // per band, d = 3
  std::vector<GammaCanonical> gamma;     // per band
  WishartCanonical omega;                // p = 2B

  int band_count() const { return static_cast<int>(alpha.size()); }
};

struct HyperParams {
  std::vector<Eigen::Vector3d> alpha_bar;  // per band
  double delta_bar = 1.0;                  // alpha prior precision
  std::vector<double> gamma_bar;           // per band prior mean of gamma
  double r_bar = 1.0;                      // gamma prior rate
  Eigen::MatrixXd omega_bar;               // 2B x 2B, prior mean of Omega
  double n_bar = 1.0;                      // Wishart prior dof

  int band_count() const { return static_cast<int>(alpha_bar.size()); }

  void validate() const {
    if (alpha_bar.empty() || gamma_bar.size() != alpha_bar.size())
      throw validation_error("HyperParams: per-band sizes inconsistent");
    if (!(delta_bar > 0.0 && r_bar > 0.0)) throw validation_error("HyperParams: delta_bar, r_bar must be > 0");
    for (double g : gamma_bar)
      if (!(g > 0.0)) throw validation_error("HyperParams: gamma_bar must be > 0");
    if (omega_bar.rows() != 2 * band_count() || omega_bar.cols() != 2 * band_count())
      throw validation_error("HyperParams: omega_bar must be 2B x 2B");
  }
};

struct FitConfig {
  double c1 = 1500.0;
  double c2 = 0.75;
  int batch_size = 8;    // minibatch I
  int iterations = 1000; // T
  std::uint64_t seed = 0;
  FrequencyGrid grid;
  int threads = 1;

  void validate() const {
    if (!(c1 > 0.0)) throw validation_error("FitConfig: c1 must be > 0");
    if (!(c2 > 0.5 && c2 <= 1.0)) throw validation_error("FitConfig: c2 must lie in (0.5, 1]");
    if (batch_size < 1 || iterations < 0) throw validation_error("FitConfig: batch_size >= 1, iterations >= 0");
    grid.validate();
  }
};

inline double step_size(int t, double c1, double c2) { return std::pow(c1 + t, -c2); }

// Prior-matched initialization; eta^Omega2 and eta^gamma2 take the values
// the updates pin them to.
inline GlobalState init_global_state(const HyperParams& hp, int N, int B) {
  hp.validate();
  GlobalState gs;
  for (int b = 0; b < B; ++b) {
    gs.alpha.push_back(gaussian_from_mean_precision(hp.alpha_bar[b],
                                                    hp.delta_bar * Eigen::Matrix3d::Identity()));
    gs.gamma.push_back(GammaCanonical{-hp.r_bar, hp.gamma_bar[b] * hp.r_bar - 1.0});
  }
  Eigen::LLT<Eigen::MatrixXd> llt(hp.omega_bar);
  if (llt.info() != Eigen::Success) throw validation_error("HyperParams: omega_bar not SPD");
  Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(2 * B, 2 * B));
  gs.omega.eta1 = -0.5 * hp.n_bar * 0.5 * (inv + inv.transpose());
  gs.omega.eta2 = 0.5 * (N + hp.n_bar - 2.0 * B - 1.0);
  return gs;
}

inline ExpectedGlobals expected_globals(const GlobalState& gs) {
  ExpectedGlobals eg;
  for (const auto& a : gs.alpha) {
    auto m = gaussian_moments(a);
    eg.alpha_mean.push_back(m.mean);
    eg.alpha_second.push_back(m.second);
  }
  for (const auto& g : gs.gamma) eg.gamma_mean.push_back(gamma_mean(g));
  eg.omega_mean = wishart_mean(gs.omega);
  return eg;
}

// Sufficient statistics feeding the natural-gradient targets; one unit is
// either a single (f~, theta) draw or a star's grid expectation.
struct GlobalSuffStats {
  Eigen::MatrixXd beta_second;  // 2B x 2B: E[beta beta^T]
  Eigen::VectorXd m2;           // per band: E[m_b^2]
  Eigen::MatrixXd md;           // 3 x B: E[m_b] d(f)
  Eigen::Matrix3d ddT;          // d(f) d(f)^T

  static GlobalSuffStats zero(int B) {
    GlobalSuffStats s;
    s.beta_second = Eigen::MatrixXd::Zero(2 * B, 2 * B);
    s.m2 = Eigen::VectorXd::Zero(B);
    s.md = Eigen::MatrixXd::Zero(3, B);
    s.ddT.setZero();
    return s;
  }

  GlobalSuffStats& operator+=(const GlobalSuffStats& o) {
    beta_second += o.beta_second;
    m2 += o.m2;
    md += o.md;
    ddT += o.ddT;
    return *this;
  }

  GlobalSuffStats& operator*=(double c) {
    beta_second *= c;
    m2 *= c;
    md *= c;
    ddT *= c;
    return *this;
  }
};

inline GlobalSuffStats stats_from_theta(const GaussianCanonical& theta, double f,
                                        const ThetaLayout& layout) {
  const int B = layout.B;
  GlobalSuffStats s = GlobalSuffStats::zero(B);
  const auto mom = gaussian_moments(theta);
  const Eigen::Vector3d d = plr_basis(f);
  for (int b = 0; b < B; ++b) {
    s.m2(b) = mom.second(layout.mean_slot(b), layout.mean_slot(b));
    s.md.col(b) = mom.mean(layout.mean_slot(b)) * d;
    for (int bp = 0; bp < B; ++bp)
      for (int c = 0; c < 2; ++c)
        for (int cp = 0; cp < 2; ++cp)
          s.beta_second(ThetaLayout::beta_pack(b, c), ThetaLayout::beta_pack(bp, cp)) =
              mom.second(layout.beta_slot(b, c), layout.beta_slot(bp, cp));
  }
  s.ddT = d * d.transpose();
  return s;
}

// Exact grid expectation over q(f) q(theta|f); requires stored thetas.
inline GlobalSuffStats stats_from_local(const LocalPosterior& lp, const ThetaLayout& layout) {
  if (lp.theta_at.empty())
    throw validation_error("stats_from_local: LocalPosterior lacks stored theta parameters");
  GlobalSuffStats s = GlobalSuffStats::zero(layout.B);
  const double df = lp.grid.delta();
  for (int k = 0; k < lp.grid.n_points; ++k) {
    const double w = lp.density(k) * df;
    if (w == 0.0) continue;
    GlobalSuffStats sk = stats_from_theta(lp.theta_at[k], lp.grid.value(k), layout);
    sk *= w;
    s += sk;
  }
  return s;
}

struct MinibatchDraw {
  int star_index = 0;
  double f_tilde = 0.0;
  GaussianCanonical theta;  // q(theta | f_tilde)
};

namespace detail {

inline GlobalSuffStats scaled_batch_stats(const std::vector<MinibatchDraw>& draws, int N, int I,
                                          const ThetaLayout& layout) {
  GlobalSuffStats total = GlobalSuffStats::zero(layout.B);
  for (const auto& d : draws) total += stats_from_theta(d.theta, d.f_tilde, layout);
  total *= static_cast<double>(N) / static_cast<double>(I);
  return total;
}

inline void check_negative_definite(const Eigen::MatrixXd& eta1, const std::string& what) {
  Eigen::LLT<Eigen::MatrixXd> llt((-0.5 * (eta1 + eta1.transpose())).eval());
  if (llt.info() != Eigen::Success) throw numerical_error(what + ": eta1 left the negative-definite cone");
}

}  // namespace detail

// Natural-gradient steps toward the expected full-conditional parameters.
// The total argument is the sufficient-statistics sum already scaled to
// full-data size (N/I times a minibatch sum, or an exact sum over stars).

inline void update_omega_from_stats(GlobalState& gs, const GlobalSuffStats& total, int N, double kappa,
                                    const HyperParams& hp) {
  const int B = gs.band_count();
  Eigen::LLT<Eigen::MatrixXd> llt(hp.omega_bar);
  if (llt.info() != Eigen::Success) throw validation_error("update_omega: omega_bar not SPD");
  Eigen::MatrixXd prior = hp.n_bar * llt.solve(Eigen::MatrixXd::Identity(2 * B, 2 * B));
  Eigen::MatrixXd xi_hat = -0.5 * (prior + total.beta_second);
  gs.omega.eta1 += kappa * (xi_hat - gs.omega.eta1);
  gs.omega.eta1 = (0.5 * (gs.omega.eta1 + gs.omega.eta1.transpose())).eval();
  gs.omega.eta2 = 0.5 * (N + hp.n_bar - 2.0 * B - 1.0);
  detail::check_negative_definite(gs.omega.eta1, "update_omega");
}

inline void update_gamma_from_stats(GlobalState& gs, const GlobalSuffStats& total, int N, double kappa,
                                    const HyperParams& hp, int b) {
  const auto am = gaussian_moments(gs.alpha[b]);
  // E_q (m - d^T alpha)^2 summed over the (scaled) batch
  const double sq = total.m2(b) - 2.0 * am.mean.dot(total.md.col(b)) +
                    (total.ddT.array() * am.second.array()).sum();
  const double xi_hat = -hp.r_bar - 0.5 * sq;
  gs.gamma[b].eta1 += kappa * (xi_hat - gs.gamma[b].eta1);
  gs.gamma[b].eta2 = 0.5 * N + hp.gamma_bar[b] * hp.r_bar - 1.0;
  if (!(gs.gamma[b].eta1 < 0.0))
    throw numerical_error("update_gamma: eta1 must stay negative (band " + std::to_string(b) + ")");
}

inline void update_alpha_from_stats(GlobalState& gs, const GlobalSuffStats& total, double kappa,
                                    const HyperParams& hp, int b) {
  const double e_gamma = gamma_mean(gs.gamma[b]);
  const Eigen::Matrix3d xi1 =
      -0.5 * hp.delta_bar * Eigen::Matrix3d::Identity() - 0.5 * e_gamma * total.ddT;
  const Eigen::Vector3d xi2 = hp.delta_bar * hp.alpha_bar[b] + e_gamma * total.md.col(b);
  gs.alpha[b].eta1 += kappa * (xi1 - gs.alpha[b].eta1);
  gs.alpha[b].eta2 += kappa * (xi2 - gs.alpha[b].eta2);
  detail::check_negative_definite(gs.alpha[b].eta1, "update_alpha");
}

inline void update_omega(GlobalState& gs, const std::vector<MinibatchDraw>& draws, int N, int I,
                         double kappa, const HyperParams& hp, const ThetaLayout& layout) {
  update_omega_from_stats(gs, detail::scaled_batch_stats(draws, N, I, layout), N, kappa, hp);
}

inline void update_gamma(GlobalState& gs, const std::vector<MinibatchDraw>& draws, int N, int I,
                         double kappa, const HyperParams& hp, const ThetaLayout& layout, int b) {
  update_gamma_from_stats(gs, detail::scaled_batch_stats(draws, N, I, layout), N, kappa, hp, b);
}

inline void update_alpha(GlobalState& gs, const std::vector<MinibatchDraw>& draws, int N, int I,
                         double kappa, const HyperParams& hp, const ThetaLayout& layout, int b) {
  update_alpha_from_stats(gs, detail::scaled_batch_stats(draws, N, I, layout), kappa, hp, b);
}

namespace detail {

// Static-partition parallel map; the work items must be independent.
inline void parallel_for(int n, int threads, const std::function<void(int)>& body) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  const int workers = std::min(threads, n);
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::mutex err_mutex;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      for (int i = w; i < n; i += workers) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

inline std::vector<int> sample_without_replacement(int N, int I, std::mt19937_64& rng) {
  std::vector<int> idx(N);
  std::iota(idx.begin(), idx.end(), 0);
  for (int k = 0; k < I; ++k) {
    std::uniform_int_distribution<int> pick(k, N - 1);
    std::swap(idx[k], idx[pick(rng)]);
  }
  idx.resize(I);
  return idx;
}

}  // namespace detail

struct SviResult {
  GlobalState globals;
  std::vector<LocalPosterior> locals;  // one per star, from the final full pass
};

using SviProgress = std::function<void(int iteration, const GlobalState&)>;

// Algorithm driver: per iteration, refresh the minibatch locals, draw one
// frequency per star, then step Omega, gamma_b, alpha_b. A finishing full
// local pass leaves every star with a posterior under the final globals.
inline SviResult run_svi(const Dataset& dataset, const HyperParams& hp,
                         const std::vector<KernelParams>& kernels, const FitConfig& config,
                         const SviProgress& progress = {}, GlobalState* resume_state = nullptr,
                         int start_iteration = 0) {
  config.validate();
  hp.validate();
  const int N = dataset.size();
  const int B = dataset.band_count;
  if (static_cast<int>(kernels.size()) != B) throw validation_error("run_svi: need one kernel per band");
  const auto layout = theta_layout(B);
  const int I = std::min(config.batch_size, N);

  GlobalState gs = resume_state ? *resume_state : init_global_state(hp, N, B);

  for (int t = start_iteration + 1; t <= config.iterations; ++t) {
    const double kappa = step_size(t, config.c1, config.c2);
    auto batch_rng = make_stream(config.seed, 0x6261u, static_cast<std::uint64_t>(t));
    const auto batch = detail::sample_without_replacement(N, I, batch_rng);
    const auto eg = expected_globals(gs);

    std::vector<MinibatchDraw> draws(batch.size());
    try {
      detail::parallel_for(static_cast<int>(batch.size()), config.threads, [&](int j) {
        const int star = batch[j];
        const auto lp = update_local(dataset.stars[star], eg, kernels, config.grid, layout);
        auto freq_rng = make_stream(config.seed, static_cast<std::uint64_t>(t),
                                    static_cast<std::uint64_t>(star) + 1);
        const double f_tilde = sample_frequency(lp, freq_rng);
        draws[j] = {star, f_tilde,
                    local_theta_canonical(dataset.stars[star], f_tilde, eg, kernels, layout)};
      });
    } catch (const std::exception& e) {
      throw numerical_error("run_svi: iteration " + std::to_string(t) + ": " + e.what());
    }

    update_omega(gs, draws, N, I, kappa, hp, layout);
    for (int b = 0; b < B; ++b) {
      update_gamma(gs, draws, N, I, kappa, hp, layout, b);
      update_alpha(gs, draws, N, I, kappa, hp, layout, b);
    }
    if (progress) progress(t, gs);
  }

  SviResult result;
  result.locals.resize(N);
  const auto eg = expected_globals(gs);
  detail::parallel_for(N, config.threads, [&](int i) {
    result.locals[i] = update_local(dataset.stars[i], eg, kernels, config.grid, layout);
  });
  result.globals = std::move(gs);
  return result;
}

// One deterministic full-batch coordinate-ascent sweep at kappa = 1 with
// exact grid expectations in place of frequency sampling. Returns the
// refreshed locals (with stored thetas) matching the globals they were
// computed under; gs is advanced in place.
inline std::vector<LocalPosterior> coordinate_ascent_sweep(const Dataset& dataset, GlobalState& gs,
                                                           const HyperParams& hp,
                                                           const std::vector<KernelParams>& kernels,
                                                           const FrequencyGrid& grid) {
  const int N = dataset.size();
  const int B = dataset.band_count;
  const auto layout = theta_layout(B);
  const auto eg = expected_globals(gs);
  std::vector<LocalPosterior> locals(N);
  GlobalSuffStats total = GlobalSuffStats::zero(B);
  for (int i = 0; i < N; ++i) {
    locals[i] = update_local(dataset.stars[i], eg, kernels, grid, layout, /*store_theta=*/true);
    total += stats_from_local(locals[i], layout);
  }
  update_omega_from_stats(gs, total, N, 1.0, hp);
  for (int b = 0; b < B; ++b) {
    update_gamma_from_stats(gs, total, N, 1.0, hp, b);
    update_alpha_from_stats(gs, total, 1.0, hp, b);
  }
  return locals;
}

}  // namespace periodplr
