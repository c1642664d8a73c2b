#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "periodplr/errors.hpp"

namespace periodplr {

// Squared-exponential + nugget kernel on the phase axis u = f * t.
struct KernelParams {
  double tau1 = 0.01;  // variance (mag^2)
  double tau2 = 0.05;  // squared length-scale (phase^2)
  double tau3 = 0.01;  // nugget variance (mag^2)

  void validate() const {
    if (!(tau1 > 0.0 && tau2 > 0.0 && tau3 > 0.0))
      throw validation_error("KernelParams: tau1, tau2, tau3 must all be > 0");
  }
};

// The nugget indicator fires on exact phase equality; duplicated epochs
// map to identical phases and pick it up off the diagonal too.
inline double kernel_eval(double u, double u_prime, const KernelParams& k) {
  const double d = u - u_prime;
  double v = k.tau1 * std::exp(-d * d / k.tau2);
  if (u == u_prime) v += k.tau3;
  return v;
}

// Sigma_ib = [k(u_p, u_q)] + diag(sigma_j^2), held with its Cholesky factor.
struct BandGramBundle {
  Eigen::MatrixXd sigma;
  Eigen::MatrixXd chol;  // lower triangular, chol * chol^T = sigma
  double logdet = 0.0;

  int size() const { return static_cast<int>(sigma.rows()); }
  bool empty() const { return sigma.rows() == 0; }
};

inline BandGramBundle build_sigma(const std::vector<double>& times, double f,
                                  const std::vector<double>& sigmas, const KernelParams& k) {
  k.validate();
  if (times.size() != sigmas.size()) throw validation_error("build_sigma: times/sigmas length mismatch");
  const int n = static_cast<int>(times.size());
  BandGramBundle out;
  out.sigma.resize(n, n);
  out.chol.resize(n, n);
  if (n == 0) return out;

  for (int p = 0; p < n; ++p) {
    const double up = f * times[p];
    for (int q = 0; q <= p; ++q) {
      const double v = kernel_eval(up, f * times[q], k);
      out.sigma(p, q) = v;
      out.sigma(q, p) = v;
    }
    out.sigma(p, p) += sigmas[p] * sigmas[p];
  }
  Eigen::LLT<Eigen::MatrixXd> llt(out.sigma);
  if (llt.info() != Eigen::Success)
    throw numerical_error("build_sigma: Cholesky failed at f = " + std::to_string(f));
  out.chol = llt.matrixL();
  for (int i = 0; i < n; ++i) out.logdet += 2.0 * std::log(out.chol(i, i));
  return out;
}

struct WhitenProducts {
  double ySy = 0.0;       // y^T Sigma^{-1} y
  Eigen::VectorXd CSy;    // C^T Sigma^{-1} y
  Eigen::MatrixXd CSC;    // C^T Sigma^{-1} C, symmetrized
};

inline WhitenProducts whiten_products(const BandGramBundle& bundle, const Eigen::VectorXd& y,
                                      const Eigen::MatrixXd& C) {
  if (y.size() != bundle.size() || C.rows() != bundle.size())
    throw validation_error("whiten_products: dimension mismatch");
  WhitenProducts out;
  const int m = static_cast<int>(C.cols());
  if (bundle.empty()) {
    out.CSy = Eigen::VectorXd::Zero(m);
    out.CSC = Eigen::MatrixXd::Zero(m, m);
    return out;
  }
  auto L = bundle.chol.triangularView<Eigen::Lower>();
  Eigen::VectorXd a = L.solve(y);
  Eigen::MatrixXd W = L.solve(C);
  out.ySy = a.squaredNorm();
  out.CSy = W.transpose() * a;
  out.CSC = W.transpose() * W;
  out.CSC = 0.5 * (out.CSC + out.CSC.transpose()).eval();
  return out;
}

// Row j = (1, cos(2 pi f t_j), sin(2 pi f t_j)).
inline Eigen::MatrixXd basis_matrix(const std::vector<double>& times, double f) {
  const int n = static_cast<int>(times.size());
  Eigen::MatrixXd C(n, 3);
  for (int j = 0; j < n; ++j) {
    const double u = 2.0 * M_PI * f * times[j];
    C(j, 0) = 1.0;
    C(j, 1) = std::cos(u);
    C(j, 2) = std::sin(u);
  }
  return C;
}

}  // namespace periodplr
