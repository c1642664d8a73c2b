#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "periodplr/local.hpp"
#include "test_helpers.hpp"

using namespace periodplr;

namespace {

ExpectedGlobals test_globals(int B) {
  std::vector<Eigen::Vector3d> alpha(B, Eigen::Vector3d(15.0, -2.0, -1.0));
  std::vector<double> gamma(B, 20.0);
  Eigen::MatrixXd omega = 5.0 * Eigen::MatrixXd::Identity(2 * B, 2 * B);
  return point_mass_globals(alpha, gamma, omega);
}

std::vector<KernelParams> test_kernels(int B) {
  return std::vector<KernelParams>(B, KernelParams{0.02, 0.05, 0.01});
}

}  // namespace

TEST_CASE("plr basis at f = 0.01") {
  const Eigen::Vector3d d = plr_basis(0.01);
  REQUIRE(d(0) == 1.0);
  REQUIRE(d(1) == Catch::Approx(-2.0));
  REQUIRE(d(2) == Catch::Approx(4.0));
}

TEST_CASE("prior theta structure") {
  const int B = 2;
  const auto layout = theta_layout(B);
  auto eg = test_globals(B);
  eg.alpha_mean[0] = Eigen::Vector3d(7.0, 0.0, 0.0);  // constant PLR in band 0
  auto [theta0, Theta] = prior_theta(0.004, eg, layout);
  REQUIRE(theta0(layout.mean_slot(0)) == Catch::Approx(7.0));
  REQUIRE(theta0(layout.beta_slot(0, 0)) == 0.0);
  REQUIRE(theta0(layout.beta_slot(1, 1)) == 0.0);
  REQUIRE(Theta(layout.mean_slot(0), layout.mean_slot(0)) == Catch::Approx(20.0));
  // K x L off-blocks exactly zero
  for (int b = 0; b < B; ++b)
    for (int bp = 0; bp < B; ++bp)
      for (int c = 0; c < 2; ++c)
        REQUIRE(Theta(layout.mean_slot(b), layout.beta_slot(bp, c)) == 0.0);
}

TEST_CASE("no observations gives posterior equal to prior") {
  const int B = 2;
  const auto layout = theta_layout(B);
  const auto eg = test_globals(B);
  StarLightCurve star;
  star.star_id = "empty";
  star.bands.resize(B);
  const double f = 0.003;
  const auto theta = local_theta_canonical(star, f, eg, test_kernels(B), layout);
  auto [theta0, Theta] = prior_theta(f, eg, layout);
  REQUIRE((theta.eta1 - (-0.5 * Theta)).norm() < 1e-12);
  REQUIRE((theta.eta2 - Theta * theta0).norm() < 1e-12);
}

TEST_CASE("local density matches exact marginalization oracle") {
  std::mt19937_64 rng(5);
  const int B = 2;
  const auto layout = theta_layout(B);
  const auto eg = test_globals(B);
  const auto kernels = test_kernels(B);
  FrequencyGrid grid;
  grid.n_points = 60;  // trimmed grid for speed; acceptance runs the full 500

  for (int rep = 0; rep < 3; ++rep) {
    const auto star = testutil::random_star(rng, B, 8, 0.004, 15.0 + 2.0 * plr_basis(0.004)(1));
    const auto lp = update_local(star, eg, kernels, grid, layout);
    const Eigen::VectorXd oracle =
        testutil::normalize_log_density(testutil::exact_log_marginal(star, grid, eg, kernels), grid.delta());
    const Eigen::VectorXd mine = lp.density.array().log();
    REQUIRE((mine - oracle).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("density normalizes to one") {
  std::mt19937_64 rng(9);
  const int B = 2;
  const auto star = testutil::random_star(rng, B, 10);
  FrequencyGrid grid;
  const auto lp = update_local(star, test_globals(B), test_kernels(B), grid, theta_layout(B));
  REQUIRE(std::abs(lp.density.sum() * grid.delta() - 1.0) < 1e-10);
  REQUIRE(lp.density.minCoeff() >= 0.0);
}

TEST_CASE("uninformative data gives near-uniform density") {
  const int B = 1;
  StarLightCurve star;
  star.star_id = "flat";
  star.bands.resize(1);
  for (int j = 0; j < 6; ++j) star.bands[0].push_back({j * 113.0, 18.0, 1e4});  // huge sigma
  FrequencyGrid grid;
  grid.n_points = 100;
  const auto lp = update_local(star, test_globals(B), test_kernels(B), grid, theta_layout(B));
  REQUIRE(lp.density.maxCoeff() / lp.density.minCoeff() < 1.05);
}

TEST_CASE("translation equivariance of q(f)") {
  std::mt19937_64 rng(13);
  const int B = 2;
  const auto layout = theta_layout(B);
  const auto kernels = test_kernels(B);
  FrequencyGrid grid;
  grid.n_points = 80;
  auto star = testutil::random_star(rng, B, 8);

  auto eg = test_globals(B);
  const auto lp = update_local(star, eg, kernels, grid, layout);

  const double c = 3.7;
  for (auto& band : star.bands)
    for (auto& o : band) o.y += c;
  for (int b = 0; b < B; ++b) {
    eg.alpha_mean[b](0) += c;
    eg.alpha_second[b] = eg.alpha_mean[b] * eg.alpha_mean[b].transpose();
  }
  const auto lp2 = update_local(star, eg, kernels, grid, layout);
  REQUIRE((lp.density - lp2.density).cwiseAbs().maxCoeff() < 1e-8 * lp.density.maxCoeff());
}

TEST_CASE("frequency sampling") {
  FrequencyGrid grid;
  grid.n_points = 10;
  LocalPosterior lp;
  lp.grid = grid;
  lp.density = Eigen::VectorXd::Zero(10);
  lp.density(4) = 1.0 / grid.delta();  // point mass at node 4

  auto rng = make_stream(1, 2, 3);
  for (int i = 0; i < 20; ++i) REQUIRE(sample_frequency(lp, rng) == grid.value(4));

  // deterministic under a fixed stream
  lp.density = Eigen::VectorXd::Constant(10, 1.0 / (grid.delta() * 10));
  auto r1 = make_stream(7, 1, 1);
  auto r2 = make_stream(7, 1, 1);
  for (int i = 0; i < 50; ++i) REQUIRE(sample_frequency(lp, r1) == sample_frequency(lp, r2));

  // uniform density: chi-square goodness of fit over 1e5 draws
  auto r3 = make_stream(17, 1, 1);
  std::vector<int> counts(10, 0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) ++counts[sample_frequency_index(lp, r3)];
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - draws / 10.0) * (c - draws / 10.0) / (draws / 10.0);
  REQUIRE(chi2 < 27.9);  // chi2(9) at p = 0.001
}

TEST_CASE("stationarity identity under recomputation") {
  std::mt19937_64 rng(21);
  const int B = 2;
  const auto layout = theta_layout(B);
  const auto eg = test_globals(B);
  const auto kernels = test_kernels(B);
  const auto star = testutil::random_star(rng, B, 8);
  const double f = 0.0042;
  const auto a = local_theta_canonical(star, f, eg, kernels, layout);
  const auto b = local_theta_canonical(star, f, eg, kernels, layout);
  REQUIRE((a.eta1 - b.eta1).norm() == 0.0);
  REQUIRE((a.eta2 - b.eta2).norm() == 0.0);
  // -2 eta1 positive definite across random grid frequencies
  for (int k = 0; k < 5; ++k) {
    FrequencyGrid g;
    const auto th = local_theta_canonical(star, g.value(static_cast<int>(rng() % g.n_points)), eg,
                                          kernels, layout);
    Eigen::LLT<Eigen::MatrixXd> llt((-(th.eta1 + th.eta1.transpose())).eval());
    REQUIRE(llt.info() == Eigen::Success);
  }
}
