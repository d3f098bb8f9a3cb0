#pragma once

#include <Eigen/Dense>
#include <iostream>

#include "snvs/normal.hpp"
#include "snvs/types.hpp"

namespace snvs {

struct ProbitFit {
  Vector coef;  // intercept first, then slopes
  Vector se;    // from the inverse Fisher information at the optimum
  bool converged = false;
  int iterations = 0;
};

/// Maximum-likelihood probit regression of a binary response on X (no
/// intercept column; one is added internally). Fisher scoring with a ridge
/// penalty on the slopes only. Falls back to a closed-form intercept-only
/// fit when the iteration fails to converge (e.g., separation).
inline ProbitFit fit_probit(const Vector& y, const Matrix& X, double ridge = 1e-4,
                            int max_iter = 100, double tol = 1e-10) {
  const Eigen::Index n = y.size();
  const Eigen::Index p = X.cols();
  ProbitFit fit;
  fit.coef = Vector::Zero(p + 1);
  fit.se = Vector::Zero(p + 1);

  const double ybar = y.mean();
  auto intercept_only = [&]() {
    fit.coef.setZero();
    fit.coef(0) = norm_quantile(std::clamp(ybar, 1e-4, 1.0 - 1e-4));
    fit.converged = false;
    return fit;
  };
  if (ybar <= 0.0 || ybar >= 1.0) return intercept_only();  // separated outright

  Matrix Xd(n, p + 1);
  Xd.col(0).setOnes();
  if (p > 0) Xd.rightCols(p) = X;

  Vector b = Vector::Zero(p + 1);
  b(0) = norm_quantile(std::clamp(ybar, 1e-4, 1.0 - 1e-4));

  constexpr double eps = 1e-10;
  for (int it = 1; it <= max_iter; ++it) {
    const Vector eta = Xd * b;
    Vector w(n), gscale(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double Phi = std::clamp(norm_cdf(eta(i)), eps, 1.0 - eps);
      const double phi = norm_pdf(eta(i));
      w(i) = phi * phi / (Phi * (1.0 - Phi));
      gscale(i) = phi * (y(i) - Phi) / (Phi * (1.0 - Phi));
    }
    Matrix H = Xd.transpose() * w.asDiagonal() * Xd;
    Vector g = Xd.transpose() * gscale;
    for (Eigen::Index r = 1; r <= p; ++r) {
      H(r, r) += ridge;
      g(r) -= ridge * b(r);
    }
    Eigen::LDLT<Matrix> ldlt(H);
    if (ldlt.info() != Eigen::Success) return intercept_only();
    const Vector step = ldlt.solve(g);
    if (!step.allFinite()) return intercept_only();
    b += step;
    fit.iterations = it;
    if (step.cwiseAbs().maxCoeff() < tol) {
      fit.converged = true;
      fit.coef = b;
      const Matrix cov = ldlt.solve(Matrix::Identity(p + 1, p + 1));
      fit.se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
      return fit;
    }
    if (!b.allFinite() || b.cwiseAbs().maxCoeff() > 1e6) return intercept_only();
  }
  return intercept_only();
}

struct MarginalFits {
  Matrix eta_hat;  // n x m fitted presence probabilities, clamped
  double cap = 1e-4;
};

/// Separate probit fit of each taxon column of Y onto X; fitted
/// probabilities clamped to [cap, 1-cap].
inline MarginalFits fit_marginal_probits(const Matrix& Y, const Matrix& X, double cap = 1e-4,
                                         double ridge = 1e-4) {
  const Eigen::Index n = Y.rows();
  const Eigen::Index m = Y.cols();
  if (n <= X.cols()) throw data_error("fit_marginal_probits: need n > p");
  MarginalFits out;
  out.cap = cap;
  out.eta_hat.resize(n, m);
  Matrix Xd(n, X.cols() + 1);
  Xd.col(0).setOnes();
  if (X.cols() > 0) Xd.rightCols(X.cols()) = X;
  int fallbacks = 0;
  for (Eigen::Index j = 0; j < m; ++j) {
    const ProbitFit fit = fit_probit(Y.col(j), X, ridge);
    if (!fit.converged) ++fallbacks;
    const Vector eta = Xd * fit.coef;
    for (Eigen::Index i = 0; i < n; ++i)
      out.eta_hat(i, j) = std::clamp(norm_cdf(eta(i)), cap, 1.0 - cap);
  }
  if (fallbacks > 0)
    std::cerr << "warning: fit_marginal_probits: " << fallbacks
              << " taxa fell back to intercept-only fits\n";
  return out;
}

}  // namespace snvs
