#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <iostream>
#include <vector>

#include "snvs/distance.hpp"
#include "snvs/normal.hpp"
#include "snvs/probit.hpp"
#include "snvs/smooth.hpp"
#include "snvs/types.hpp"

namespace snvs {

/// Orthogonal spatial basis: unit row norms, mutually orthogonal columns.
struct BasisFunctions {
  Matrix psi;           // n x L
  Vector eigenvalues;   // L positive eigenvalues of the covariance estimate
  double variance_explained = 0.0;

  Eigen::Index L() const { return psi.cols(); }
};

struct LatentCovarianceEstimate {
  Matrix sigma_hat;            // n x n Taylor covariance (diagonal replaced)
  Vector nu_hat;               // latent mean field, Phi^{-1}(eta_bar)
  Matrix theta_hat;            // smoothed cross moments
  double h_mean = 0.0;         // 2-D bandwidth
  double h_cov = 0.0;          // 4-D bandwidth
  Vector corrected_variances;  // bias-corrected diagonal
};

/// Taylor-approximation covariance of the latent process from smoothed
/// binary cross-moments: sigma(s,s') = theta(s,s') / [phi(nu(s)) phi(nu(s'))].
inline Matrix taylor_covariance(const Matrix& theta_hat, const Vector& nu_hat) {
  const Eigen::Index n = theta_hat.rows();
  Vector inv_phi(n);
  for (Eigen::Index i = 0; i < n; ++i) inv_phi(i) = 1.0 / norm_pdf(nu_hat(i));
  return inv_phi.asDiagonal() * theta_hat * inv_phi.asDiagonal();
}

/// Bias-corrected variances: for each location, the intercept of the
/// weighted regression of sigma(s,s') on w(s,s') d(s,s') over s' != s,
/// with w(s,s') = exp(-d/d10) 1{d <= d10} and d10 the distance to the
/// 10th nearest neighbor. Intercepts are floored at 1e-6.
inline Vector variance_bias_correction(const Matrix& sigma_hat, const Matrix& dist,
                                       double floor_value = 1e-6) {
  const Eigen::Index n = sigma_hat.rows();
  if (n < 2) throw data_error("variance_bias_correction: need at least 2 locations");
  const Eigen::Index k_neighbors = std::min<Eigen::Index>(10, n - 1);
  Vector corrected(n);
  bool warned = false;
  std::vector<double> dists;
  for (Eigen::Index i = 0; i < n; ++i) {
    dists.clear();
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) dists.push_back(dist(i, j));
    std::nth_element(dists.begin(), dists.begin() + (k_neighbors - 1), dists.end());
    const double d10 = dists[static_cast<std::size_t>(k_neighbors - 1)];

    double sw = 0.0, swx = 0.0, swy = 0.0, swxx = 0.0, swxy = 0.0;
    int in_window = 0;
    double nn_sum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = dist(i, j);
      if (d > d10) continue;
      ++in_window;
      nn_sum += sigma_hat(i, j);
      const double w = (d10 > 0.0) ? std::exp(-d / d10) : 1.0;
      const double x = w * d;
      const double y = sigma_hat(i, j);
      sw += w;
      swx += w * x;
      swy += w * y;
      swxx += w * x * x;
      swxy += w * x * y;
    }
    double b0;
    if (in_window < 2) {
      if (!warned) {
        std::cerr << "warning: variance_bias_correction: location " << i + 1
                  << " has fewer than 2 in-window neighbors; using nearest-neighbor mean\n";
        warned = true;
      }
      b0 = in_window > 0 ? nn_sum / in_window : 0.0;
    } else {
      const double det = sw * swxx - swx * swx;
      const double scale = std::max(sw * swxx, swx * swx);
      if (det <= 1e-12 * std::max(scale, 1e-300)) {
        b0 = swy / sw;  // degenerate design, weighted mean
      } else {
        b0 = (swxx * swy - swx * swxy) / det;
      }
    }
    corrected(i) = std::max(b0, floor_value);
  }
  return corrected;
}

struct PreBasis {
  Matrix columns;  // n x L eigenvectors scaled by sqrt(eigenvalue)
  Vector eigenvalues;
  double variance_explained = 0.0;
};

/// Leading eigenpairs of the corrected covariance: negative eigenvalues are
/// dropped, and L is the smallest count whose cumulative share of the
/// positive spectrum reaches the variance target.
inline PreBasis eigenbasis(const Matrix& sigma_corrected, double variance_target = 0.90) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (sigma_corrected + sigma_corrected.transpose()));
  if (es.info() != Eigen::Success) throw data_error("eigenbasis: eigendecomposition failed");
  const Vector evals = es.eigenvalues();  // ascending
  const Eigen::Index n = evals.size();
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (evals(i) > 0.0) total += evals(i);
  if (total <= 0.0)
    throw data_error("eigenbasis: no positive eigenvalues; covariance estimate is degenerate");

  PreBasis out;
  std::vector<Eigen::Index> keep;
  double cum = 0.0;
  for (Eigen::Index i = n - 1; i >= 0 && evals(i) > 0.0; --i) {
    keep.push_back(i);
    cum += evals(i);
    if (cum / total >= variance_target) break;
  }
  const Eigen::Index L = static_cast<Eigen::Index>(keep.size());
  out.columns.resize(n, L);
  out.eigenvalues.resize(L);
  for (Eigen::Index l = 0; l < L; ++l) {
    const Eigen::Index src = keep[static_cast<std::size_t>(l)];
    out.eigenvalues(l) = evals(src);
    out.columns.col(l) = es.eigenvectors().col(src) * std::sqrt(evals(src));
  }
  out.variance_explained = cum / total;
  return out;
}

/// Normalize rows to unit length, then rotate by the right singular vectors
/// so the columns are orthogonal again. Row norms are preserved by the
/// rotation, so both structural invariants hold on the output.
inline BasisFunctions scale_and_rotate(const PreBasis& pre) {
  const Eigen::Index n = pre.columns.rows();
  Matrix scaled = pre.columns;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = scaled.row(i).norm();
    if (norm < 1e-12)
      throw data_error("scale_and_rotate: location row " + std::to_string(i + 1) +
                       " carries no structural variance");
    scaled.row(i) /= norm;
  }
  Eigen::JacobiSVD<Matrix> svd(scaled, Eigen::ComputeThinV);
  BasisFunctions out;
  out.psi = scaled * svd.matrixV();
  out.eigenvalues = pre.eigenvalues;
  out.variance_explained = pre.variance_explained;
  return out;
}

/// Greedy farthest-point (maximin) subset of target_count locations,
/// seeded at the point nearest the centroid. Deterministic.
inline std::vector<Eigen::Index> downsample_locations(const LocationSet& locs,
                                                      Eigen::Index target_count) {
  const Eigen::Index n = static_cast<Eigen::Index>(locs.size());
  if (target_count > n) throw data_error("downsample_locations: target exceeds location count");
  const Matrix dist = pairwise_distances(locs, locs.geographic ? DistanceMetric::GreatCircleMiles
                                                               : DistanceMetric::Euclidean)
                          .values;
  double cx = 0.0, cy = 0.0;
  for (const auto& p : locs.points) {
    cx += p.x;
    cy += p.y;
  }
  cx /= static_cast<double>(n);
  cy /= static_cast<double>(n);
  Eigen::Index start = 0;
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = locs.points[static_cast<std::size_t>(i)];
    const double d = std::hypot(p.x - cx, p.y - cy);
    if (d < best) {
      best = d;
      start = i;
    }
  }
  std::vector<Eigen::Index> chosen = {start};
  Vector min_dist = dist.col(start);
  while (static_cast<Eigen::Index>(chosen.size()) < target_count) {
    Eigen::Index next = -1;
    double far = -1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (min_dist(i) > far) {
        far = min_dist(i);
        next = i;
      }
    }
    chosen.push_back(next);
    min_dist = min_dist.cwiseMin(dist.col(next));
  }
  return chosen;
}

struct BasisOptions {
  double variance_target = 0.90;
  double gcv_grid_lo = 0.05;
  double gcv_grid_hi = 2.0;
  int gcv_grid_size = 15;
  Eigen::Index downsample_count = 200;  // GCV location budget for the 4-D smoother
  double probability_cap = 1e-4;
  double probit_ridge = 1e-4;
  std::size_t max_pairs = 4'000'000;
};

struct BasisEstimate {
  BasisFunctions basis;
  LatentCovarianceEstimate covariance;
};

/// Full data-driven basis pipeline: per-taxon probit fits, kernel-smoothed
/// mean and cross-moments with GCV bandwidths, Taylor covariance, variance
/// bias correction, eigen-truncation, row scaling, and rotation.
inline BasisEstimate estimate_basis(const Matrix& Y, const Matrix& X, const LocationSet& locs,
                                    const BasisOptions& opt = {}) {
  const Eigen::Index n = Y.rows();
  if (static_cast<Eigen::Index>(locs.size()) != n)
    throw data_error("estimate_basis: location count does not match Y rows");
  const DistanceMetric metric =
      locs.geographic ? DistanceMetric::GreatCircleMiles : DistanceMetric::Euclidean;
  const Matrix dist = pairwise_distances(locs, metric).values;

  const MarginalFits fits = fit_marginal_probits(Y, X, opt.probability_cap, opt.probit_ridge);
  const Vector eta_bar_raw = fits.eta_hat.rowwise().mean();

  LatentCovarianceEstimate cov;
  const auto grid2 = bandwidth_grid(dist, opt.gcv_grid_lo, opt.gcv_grid_hi, opt.gcv_grid_size);
  cov.h_mean = gcv_bandwidth(grid2, [&](double h) { return gcv_point_2d(eta_bar_raw, dist, h); });
  Vector eta_bar = smooth_mean_2d(eta_bar_raw, dist, cov.h_mean);
  cov.nu_hat.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    cov.nu_hat(i) =
        norm_quantile(std::clamp(eta_bar(i), opt.probability_cap, 1.0 - opt.probability_cap));

  const Matrix theta_raw = raw_cross_moments(Y, fits.eta_hat);
  if (n > opt.downsample_count) {
    const auto subset = downsample_locations(locs, opt.downsample_count);
    const Eigen::Index d = static_cast<Eigen::Index>(subset.size());
    Matrix sub_theta(d, d), sub_dist(d, d);
    for (Eigen::Index a = 0; a < d; ++a)
      for (Eigen::Index b = 0; b < d; ++b) {
        sub_theta(a, b) = theta_raw(subset[static_cast<std::size_t>(a)],
                                    subset[static_cast<std::size_t>(b)]);
        sub_dist(a, b) =
            dist(subset[static_cast<std::size_t>(a)], subset[static_cast<std::size_t>(b)]);
      }
    const auto grid4 =
        bandwidth_grid(sub_dist, opt.gcv_grid_lo, opt.gcv_grid_hi, opt.gcv_grid_size);
    cov.h_cov =
        gcv_bandwidth(grid4, [&](double h) { return gcv_point_4d(sub_theta, sub_dist, h); });
  } else {
    const auto grid4 = bandwidth_grid(dist, opt.gcv_grid_lo, opt.gcv_grid_hi, opt.gcv_grid_size);
    cov.h_cov = gcv_bandwidth(grid4, [&](double h) { return gcv_point_4d(theta_raw, dist, h); });
  }
  if (static_cast<std::size_t>(n) * static_cast<std::size_t>(n) > opt.max_pairs)
    throw data_error("estimate_basis: location pair count exceeds the smoothing ceiling");
  cov.theta_hat = smooth_pairs_4d(theta_raw, dist, cov.h_cov);

  cov.sigma_hat = taylor_covariance(cov.theta_hat, cov.nu_hat);
  cov.corrected_variances = variance_bias_correction(cov.sigma_hat, dist);
  cov.sigma_hat.diagonal() = cov.corrected_variances;

  const PreBasis pre = eigenbasis(cov.sigma_hat, opt.variance_target);
  BasisEstimate out;
  out.basis = scale_and_rotate(pre);
  out.covariance = std::move(cov);
  return out;
}

}  // namespace snvs
