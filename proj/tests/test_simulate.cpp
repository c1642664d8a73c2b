#include <catch2/catch_amalgamated.hpp>

#include <cstdio>

#include "periodplr/simulate.hpp"

using namespace periodplr;

namespace {

PopulationTruth small_truth() {
  PopulationTruth truth;
  truth.alpha = {Eigen::Vector3d(15.0, -2.0, -1.0), Eigen::Vector3d(14.5, -2.2, -0.8)};
  truth.gamma = {40.0, 40.0};
  truth.omega = 8.0 * Eigen::MatrixXd::Identity(4, 4);
  truth.kernels = {KernelParams{0.005, 0.05, 0.005}, KernelParams{0.005, 0.05, 0.005}};
  return truth;
}

}  // namespace

TEST_CASE("noise model magnitude dependence") {
  NoiseModel nm;
  const double m = 19.0;
  REQUIRE(nm.sigma(m) == Catch::Approx(std::exp(1.82e-6 * std::pow(m, 5.0) - 5.84)).margin(1e-12));
  REQUIRE(nm.sigma(19.0) == Catch::Approx(0.266).margin(0.01));
  NoiseModel n2 = nm;
  n2.offset = 0.05;
  REQUIRE(n2.sigma(m) == Catch::Approx(nm.sigma(m) + 0.05).margin(1e-12));
  // brighter stars are quieter
  REQUIRE(nm.sigma(15.0) < nm.sigma(20.0));
}

TEST_CASE("cadence constraints") {
  CadenceSpec spec;
  spec.span = 1500.0;
  spec.counts = {40, 40};
  constexpr double year = 365.25;

  spec.kind = CadenceKind::uniform;
  auto times = cadence_times(spec, std::uint64_t{5});
  for (const auto& band : times) {
    REQUIRE(static_cast<int>(band.size()) == 40);
    for (std::size_t j = 0; j < band.size(); ++j) {
      REQUIRE(band[j] >= 0.0);
      REQUIRE(band[j] <= spec.span);
      if (j) REQUIRE(band[j] >= band[j - 1]);
    }
  }

  spec.kind = CadenceKind::seasonal;
  times = cadence_times(spec, std::uint64_t{6});
  for (const auto& band : times)
    for (double t : band) REQUIRE(std::fmod(t, year) < (1.0 - spec.gap_fraction) * year);

  spec.kind = CadenceKind::staggered;
  times = cadence_times(spec, std::uint64_t{7});
  for (double t : times[0]) REQUIRE(t <= spec.span);  // band 0 unrestricted
  for (double t : times[1]) REQUIRE(t >= spec.band_offset * spec.span);

  CadenceSpec bad = spec;
  bad.counts.clear();
  std::mt19937_64 rng(1);
  REQUIRE_THROWS_AS(cadence_times(bad, rng), validation_error);
}

TEST_CASE("near-deterministic star is mean plus sinusoid") {
  PopulationTruth truth = small_truth();
  truth.gamma = {1e16, 1e16};                  // pin m at the PLR
  truth.omega = 1e-4 * Eigen::MatrixXd::Identity(4, 4);  // large beta variance is fine
  truth.kernels = {KernelParams{1e-16, 0.05, 1e-16}, KernelParams{1e-16, 0.05, 1e-16}};
  NoiseModel noise;
  noise.a = 0.0;
  noise.b = 30.0;  // sigma ~ 1e-13
  CadenceSpec cad;
  cad.kind = CadenceKind::uniform;
  cad.counts = {15, 15};
  auto [ds, truths] = generate_dataset(1, truth, cad, noise, 31);
  const auto& tr = truths[0];
  const double lf = std::log10(tr.f_true);
  for (int b = 0; b < 2; ++b) {
    const double plr = truth.alpha[b](0) + truth.alpha[b](1) * lf + truth.alpha[b](2) * lf * lf;
    REQUIRE(tr.m_true(b) == Catch::Approx(plr).margin(1e-6));
    for (const auto& o : ds.stars[0].bands[b]) {
      const double u = 2.0 * M_PI * tr.f_true * o.t;
      const double s = tr.m_true(b) + tr.beta_true(2 * b) * std::cos(u) +
                       tr.beta_true(2 * b + 1) * std::sin(u);
      REQUIRE(o.y == Catch::Approx(s).margin(1e-5));
    }
  }
}

TEST_CASE("true frequencies are uniform over the range") {
  const PopulationTruth truth = small_truth();
  CadenceSpec cad;
  cad.kind = CadenceKind::uniform;
  cad.counts = {1, 1};
  auto [ds, truths] = generate_dataset(2000, truth, cad, NoiseModel{}, 77);
  int low = 0;
  double mn = 1.0, mx = 0.0;
  for (const auto& tr : truths) {
    REQUIRE(tr.f_true >= truth.f_min);
    REQUIRE(tr.f_true <= truth.f_max);
    if (tr.f_true < 0.5 * (truth.f_min + truth.f_max)) ++low;
    mn = std::min(mn, tr.f_true);
    mx = std::max(mx, tr.f_true);
  }
  REQUIRE(std::abs(low / 2000.0 - 0.5) < 0.04);  // ~4.5 binomial SEs
  REQUIRE(mn < truth.f_min + 0.05 * (truth.f_max - truth.f_min));
  REQUIRE(mx > truth.f_max - 0.05 * (truth.f_max - truth.f_min));
}

TEST_CASE("GP draw sample covariance matches the kernel gram") {
  const KernelParams k{0.04, 0.2, 0.01};
  const std::vector<double> phases{0.0, 0.3, 0.55, 1.1, 2.4};
  const int n = 5, reps = 20000;
  Eigen::MatrixXd H(n, n);
  for (int p = 0; p < n; ++p)
    for (int q = 0; q < n; ++q) H(p, q) = kernel_eval(phases[p], phases[q], k);
  auto rng = make_stream(3, 0x99);
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n, n);
  for (int r = 0; r < reps; ++r) {
    const Eigen::VectorXd h = detail::draw_gp(phases, k, rng);
    S += h * h.transpose();
  }
  S /= reps;
  REQUIRE((S - H).norm() / H.norm() < 0.05);
}

TEST_CASE("simulation grid shape and reproducibility") {
  const PopulationTruth truth = small_truth();
  SimulationGridSettings settings;
  settings.N = 2;
  settings.seed = 123;
  const auto grid = simulation_grid(truth, settings);
  REQUIRE(grid.size() == 90);

  // every combination appears exactly once with the right per-band counts
  int with_label = 0;
  for (const auto& sd : grid) {
    REQUIRE(sd.dataset.size() == 2);
    REQUIRE(sd.truths.size() == 2);
    if (sd.label == "n10-30_C3_N2") {
      ++with_label;
      REQUIRE(sd.dataset.stars[0].n_obs(0) == 30);
      REQUIRE(sd.dataset.stars[0].n_obs(1) == 10);
    }
  }
  REQUIRE(with_label == 1);

  const auto grid2 = simulation_grid(truth, settings);
  REQUIRE(grid2[17].truths[1].f_true == grid[17].truths[1].f_true);
  REQUIRE(grid2[40].dataset.stars[0].bands[0][3].y == grid[40].dataset.stars[0].bands[0][3].y);

  PopulationTruth one_band = truth;
  one_band.alpha.resize(1);
  one_band.gamma.resize(1);
  one_band.kernels.resize(1);
  one_band.omega = Eigen::MatrixXd::Identity(2, 2);
  REQUIRE_THROWS_AS(simulation_grid(one_band, settings), validation_error);
}

TEST_CASE("truths csv round trip") {
  std::vector<TruthRecord> truths(2);
  truths[0].star_id = "sim0";
  truths[0].f_true = 0.00432;
  truths[0].m_true = Eigen::Vector2d(18.2, 17.4);
  truths[1].star_id = "sim1";
  truths[1].f_true = 0.0071;
  truths[1].m_true = Eigen::Vector2d(19.0, 18.1);
  const std::string path = "/tmp/periodplr_test_truths.csv";
  save_truths_csv(truths, {"a", "b"}, path, "round trip");
  const auto back = load_truths_csv(path);
  std::remove(path.c_str());
  REQUIRE(back.size() == 2);
  REQUIRE(back[0].star_id == "sim0");
  REQUIRE(back[0].f_true == truths[0].f_true);
  REQUIRE(back[1].m_true(1) == truths[1].m_true(1));
  REQUIRE_THROWS_AS(load_truths_csv("/tmp/periodplr_no_such_truths.csv"), io_error);
}
