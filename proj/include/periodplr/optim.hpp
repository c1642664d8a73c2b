#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "periodplr/errors.hpp"

namespace periodplr {

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
};

// Standard Nelder-Mead simplex minimizer (reflection 1, expansion 2,
// contraction 0.5, shrink 0.5). Converges on simplex value spread.
inline NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                                    const Eigen::VectorXd& x0, double step = 1.0,
                                    int max_iter = 500, double tol = 1e-9) {
  const int n = static_cast<int>(x0.size());
  if (n < 1) throw validation_error("nelder_mead: empty start point");

  std::vector<Eigen::VectorXd> xs(n + 1, x0);
  for (int i = 0; i < n; ++i) xs[i + 1](i) += step;
  std::vector<double> fs(n + 1);
  for (int i = 0; i <= n; ++i) fs[i] = f(xs[i]);

  auto order = [&]() {
    std::vector<int> idx(n + 1);
    for (int i = 0; i <= n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fs[a] < fs[b]; });
    std::vector<Eigen::VectorXd> xs2(n + 1);
    std::vector<double> fs2(n + 1);
    for (int i = 0; i <= n; ++i) {
      xs2[i] = xs[idx[i]];
      fs2[i] = fs[idx[i]];
    }
    xs = std::move(xs2);
    fs = std::move(fs2);
  };

  int it = 0;
  for (; it < max_iter; ++it) {
    order();
    if (std::abs(fs[n] - fs[0]) <= tol * (std::abs(fs[0]) + tol)) break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) centroid += xs[i];
    centroid /= n;

    Eigen::VectorXd xr = centroid + (centroid - xs[n]);
    const double fr = f(xr);
    if (fr < fs[0]) {
      Eigen::VectorXd xe = centroid + 2.0 * (centroid - xs[n]);
      const double fe = f(xe);
      if (fe < fr) {
        xs[n] = xe;
        fs[n] = fe;
      } else {
        xs[n] = xr;
        fs[n] = fr;
      }
    } else if (fr < fs[n - 1]) {
      xs[n] = xr;
      fs[n] = fr;
    } else {
      Eigen::VectorXd xc = centroid + 0.5 * ((fr < fs[n] ? xr : xs[n]) - centroid);
      const double fc = f(xc);
      if (fc < std::min(fr, fs[n])) {
        xs[n] = xc;
        fs[n] = fc;
      } else {
        for (int i = 1; i <= n; ++i) {
          xs[i] = xs[0] + 0.5 * (xs[i] - xs[0]);
          fs[i] = f(xs[i]);
        }
      }
    }
  }
  order();
  return {xs[0], fs[0], it};
}

}  // namespace periodplr
