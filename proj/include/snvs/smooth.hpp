#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "snvs/probit.hpp"
#include "snvs/types.hpp"

namespace snvs {

/// Gaussian kernel weights K(i,j) = exp(-d(i,j)^2 / (2 h^2)).
inline Matrix gaussian_kernel(const Matrix& dist, double h) {
  if (!(h > 0.0)) throw data_error("gaussian_kernel: bandwidth must be > 0");
  return (-dist.array().square() / (2.0 * h * h)).exp();
}

/// Row-normalized Nadaraya-Watson smoother matrix.
inline Matrix nw_smoother(const Matrix& dist, double h) {
  Matrix K = gaussian_kernel(dist, h);
  const Vector row_sums = K.rowwise().sum();
  return row_sums.cwiseInverse().asDiagonal() * K;
}

/// Bivariate kernel smooth of a per-location field, evaluated at the
/// observed locations.
inline Vector smooth_mean_2d(const Vector& values, const Matrix& dist, double h) {
  return nw_smoother(dist, h) * values;
}

struct GcvPoint {
  double rss = 0.0;
  double trace = 0.0;     // tr(S_h)
  double n_points = 0.0;  // number of smoothed points
};

/// Generalized cross-validation over a candidate bandwidth grid:
/// GCV(h) = n RSS(h) / (n - tr S_h)^2, smallest minimizing h on ties.
inline double gcv_bandwidth(const std::vector<double>& grid,
                            const std::function<GcvPoint(double)>& eval) {
  if (grid.empty()) throw data_error("gcv_bandwidth: empty candidate grid");
  double best_h = -1.0;
  double best_score = std::numeric_limits<double>::infinity();
  for (double h : grid) {
    if (!(h > 0.0)) throw data_error("gcv_bandwidth: candidate bandwidths must be > 0");
    const GcvPoint pt = eval(h);
    if (pt.trace >= pt.n_points) continue;  // saturated smoother, no residual df
    const double denom = pt.n_points - pt.trace;
    const double score = pt.n_points * pt.rss / (denom * denom);
    if (score < best_score) {
      best_score = score;
      best_h = h;
    }
  }
  if (best_h < 0.0)
    throw data_error(
        "gcv_bandwidth: tr(S_h) >= n for every candidate; widen the bandwidth grid upward");
  return best_h;
}

inline GcvPoint gcv_point_2d(const Vector& values, const Matrix& dist, double h) {
  const Matrix S = nw_smoother(dist, h);
  GcvPoint pt;
  pt.rss = (values - S * values).squaredNorm();
  pt.trace = S.diagonal().sum();
  pt.n_points = static_cast<double>(values.size());
  return pt;
}

/// Raw latent cross-moment estimates: m^{-1} sum_j [Y_j(s) Y_j(s') -
/// eta_j(s) eta_j(s')] for every location pair.
inline Matrix raw_cross_moments(const Matrix& Y, const Matrix& eta_hat) {
  const double m = static_cast<double>(Y.cols());
  return (Y * Y.transpose() - eta_hat * eta_hat.transpose()) / m;
}

/// Four-dimensional kernel smooth over (s, s') pairs. The product kernel
/// factorizes as K4((s,s'),(a,b)) = K2(s,a) K2(s',b). Training pairs are the
/// off-diagonal ones only: the raw same-site moments carry the binary-data
/// variance bias that the downstream intercept regression removes, and
/// letting them into the surface would spread that bias everywhere. The
/// surface is still evaluated at every pair, diagonal included.
inline Matrix smooth_pairs_4d(const Matrix& theta_raw, const Matrix& dist, double h) {
  const Matrix K = gaussian_kernel(dist, h);
  const Vector rs = K.rowwise().sum();
  const Matrix num =
      K * theta_raw * K.transpose() - K * theta_raw.diagonal().asDiagonal() * K.transpose();
  const Matrix den = rs * rs.transpose() - K * K.transpose();
  Matrix out(theta_raw.rows(), theta_raw.cols());
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index j = 0; j < out.cols(); ++j)
      out(i, j) = den(i, j) > 1e-300 ? num(i, j) / den(i, j) : theta_raw(i, j);
  return 0.5 * (out + out.transpose());
}

/// GCV bookkeeping for the pair smoother over the unordered off-diagonal
/// training pairs. Raw moments at pairs sharing a location reuse the same
/// presence rows, so their errors are correlated and plain per-point
/// accounting lets the smoother memorize noise through them. Residuals are
/// therefore computed with every shared-location pair held out of the fit,
/// and the trace charges that whole correlated neighborhood as the point's
/// effective self-weight.
inline GcvPoint gcv_point_4d(const Matrix& theta_raw, const Matrix& dist, double h) {
  const Matrix K = gaussian_kernel(dist, h);
  const Vector rs = K.rowwise().sum();
  const Matrix U = K * theta_raw;
  const Matrix num = U * K.transpose() - K * theta_raw.diagonal().asDiagonal() * K.transpose();
  const Matrix den = rs * rs.transpose() - K * K.transpose();
  const Eigen::Index n = theta_raw.rows();
  GcvPoint pt;
  pt.n_points = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double kij = K(i, j);
      // kernel mass and weighted sum over training pairs touching i or j
      const double e_num = (U(j, i) - kij * theta_raw(i, i)) +
                           kij * (U(j, j) - theta_raw(j, j)) +
                           kij * (U(i, i) - theta_raw(i, i)) +
                           (U(i, j) - kij * theta_raw(j, j)) -
                           theta_raw(i, j) * (1.0 + kij * kij);
      const double e_den = (rs(j) - kij) + kij * (rs(j) - 1.0) + kij * (rs(i) - 1.0) +
                           (rs(i) - kij) - (1.0 + kij * kij);
      const double d_out = den(i, j) - e_den;
      if (d_out <= 1e-300) {
        pt.trace = pt.n_points;  // saturated; gcv_bandwidth will skip this h
        return pt;
      }
      const double r = theta_raw(i, j) - (num(i, j) - e_num) / d_out;
      pt.rss += r * r;
      pt.trace += e_den / den(i, j);
    }
  return pt;
}

/// Cross-moment pipeline step: raw pair moments smoothed at bandwidth h.
/// n^2 pairs above max_pairs must be downsampled by the caller first.
inline Matrix estimate_cross_moments(const Matrix& Y, const MarginalFits& fits, const Matrix& dist,
                                     double h, std::size_t max_pairs = 4'000'000) {
  const std::size_t n = static_cast<std::size_t>(Y.rows());
  if (n * n > max_pairs)
    throw data_error("estimate_cross_moments: " + std::to_string(n * n) +
                     " location pairs exceed the ceiling of " + std::to_string(max_pairs) +
                     "; downsample the locations first");
  return smooth_pairs_4d(raw_cross_moments(Y, fits.eta_hat), dist, h);
}

/// Log-spaced bandwidth grid [lo, hi] x median positive pairwise distance.
inline std::vector<double> bandwidth_grid(const Matrix& dist, double lo = 0.05, double hi = 2.0,
                                          int size = 15) {
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(dist.rows()) * (dist.rows() - 1) / 2);
  for (Eigen::Index i = 0; i < dist.rows(); ++i)
    for (Eigen::Index j = i + 1; j < dist.cols(); ++j)
      if (dist(i, j) > 0.0) d.push_back(dist(i, j));
  if (d.empty()) throw data_error("bandwidth_grid: no positive pairwise distances");
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
  const double med = d[d.size() / 2];
  std::vector<double> grid(static_cast<std::size_t>(size));
  if (size == 1) {
    grid[0] = lo * med;
    return grid;
  }
  const double la = std::log(lo * med);
  const double lb = std::log(hi * med);
  for (int k = 0; k < size; ++k)
    grid[static_cast<std::size_t>(k)] = std::exp(la + (lb - la) * k / (size - 1));
  return grid;
}

}  // namespace snvs
