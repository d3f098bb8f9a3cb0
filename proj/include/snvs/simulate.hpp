#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <string>

#include "snvs/rng.hpp"
#include "snvs/types.hpp"

namespace snvs {

enum class SpatialDep { Ind, Exp, Nonstat };
enum class TaxaDep { Ind, AR };

inline std::string spatial_dep_name(SpatialDep s) {
  switch (s) {
    case SpatialDep::Ind: return "ind";
    case SpatialDep::Exp: return "exp";
    case SpatialDep::Nonstat: return "nonstat";
  }
  return "?";
}

inline std::string taxa_dep_name(TaxaDep t) { return t == TaxaDep::Ind ? "ind" : "ar"; }

struct SimConfig {
  int grid_side = 15;  // n = grid_side^2 locations on the unit square
  int m = 50;
  int p = 20;
  SpatialDep spatial = SpatialDep::Ind;
  TaxaDep taxa = TaxaDep::Ind;
  double large_effect = 0.5;
  double small_effect = -0.25;
  std::array<double, 3> prevalences = {1.0, 0.5, 0.1};
  int replicates = 50;
  std::uint64_t seed = 1;
};

struct SimulatedDataset {
  Dataset data;
  Matrix beta_truth;        // m x p
  std::vector<int> m_star;  // 1 iff the covariate column has a nonzero entry
};

/// Regular grid on the unit square, spacing 1/(side-1).
inline LocationSet unit_grid(int side) {
  LocationSet locs;
  locs.geographic = false;
  const double step = side > 1 ? 1.0 / (side - 1) : 0.0;
  for (int iy = 0; iy < side; ++iy)
    for (int ix = 0; ix < side; ++ix) {
      SpatialLocation p;
      p.id = "L" + std::to_string(iy * side + ix + 1);
      p.x = ix * step;
      p.y = iy * step;
      locs.points.push_back(std::move(p));
    }
  return locs;
}

inline double min_positive_distance(const LocationSet& locs) {
  double h = std::numeric_limits<double>::infinity();
  const auto n = locs.points.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = std::hypot(locs.points[i].x - locs.points[j].x,
                                  locs.points[i].y - locs.points[j].y);
      if (d > 0.0 && d < h) h = d;
    }
  if (!std::isfinite(h)) throw data_error("min_positive_distance: all locations coincide");
  return h;
}

/// Latent spatial covariance of the generator. Ind: identity. Exp:
/// exponential with range solving exp(-h/r) = 0.75 at the closest-pair
/// distance h. Nonstat: cos(2 pi s1) cos(2 pi s1') + sin(2 pi s2) sin(2 pi s2')
/// (rank two by construction).
inline Matrix build_sigma_z(SpatialDep kind, const LocationSet& locs) {
  const Eigen::Index n = static_cast<Eigen::Index>(locs.size());
  if (kind == SpatialDep::Ind) return Matrix::Identity(n, n);
  if (kind == SpatialDep::Exp) {
    const double h = min_positive_distance(locs);
    const double range = -h / std::log(0.75);
    Matrix S(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        const double d = std::hypot(locs.points[static_cast<std::size_t>(i)].x -
                                        locs.points[static_cast<std::size_t>(j)].x,
                                    locs.points[static_cast<std::size_t>(i)].y -
                                        locs.points[static_cast<std::size_t>(j)].y);
        S(i, j) = std::exp(-d / range);
      }
    return S;
  }
  Vector u(n), v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    u(i) = std::cos(2.0 * M_PI * locs.points[static_cast<std::size_t>(i)].x);
    v(i) = std::sin(2.0 * M_PI * locs.points[static_cast<std::size_t>(i)].y);
  }
  return u * u.transpose() + v * v.transpose();
}

inline Eigen::LLT<Matrix> chol_with_generator_jitter(Matrix C, const char* what) {
  Eigen::LLT<Matrix> llt(C);
  if (llt.info() != Eigen::Success) {
    C.diagonal().array() += 1e-10;
    llt.compute(C);
    if (llt.info() != Eigen::Success)
      throw data_error(std::string(what) + ": covariance factorization failed after jitter");
  }
  return llt;
}

/// AR(0.8) cross-dependence kernel c(j, j') = 0.8^|j - j'|.
inline Matrix ar_cross_dependence(Eigen::Index count, double base = 0.8) {
  Matrix C(count, count);
  for (Eigen::Index a = 0; a < count; ++a)
    for (Eigen::Index b = 0; b < count; ++b) C(a, b) = std::pow(base, std::abs(a - b));
  return C;
}

/// Covariates from a mean-zero Gaussian process with separable covariance
/// c(r, r') Sigma_x(s, s'), c = 0.8^|r-r'|, Sigma_x exponential with
/// closest-pair correlation 0.5. Drawn via the Kronecker-factored Cholesky.
inline CovariateMatrix draw_covariates(const LocationSet& locs, const SimConfig& cfg, Rng& rng) {
  const Eigen::Index n = static_cast<Eigen::Index>(locs.size());
  const double h = min_positive_distance(locs);
  const double range = -h / std::log(0.5);
  Matrix Sx(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = std::hypot(locs.points[static_cast<std::size_t>(i)].x -
                                      locs.points[static_cast<std::size_t>(j)].x,
                                  locs.points[static_cast<std::size_t>(i)].y -
                                      locs.points[static_cast<std::size_t>(j)].y);
      Sx(i, j) = std::exp(-d / range);
    }
  const auto llt_s = chol_with_generator_jitter(std::move(Sx), "draw_covariates spatial");
  const auto llt_c = chol_with_generator_jitter(ar_cross_dependence(cfg.p), "draw_covariates cross");
  Matrix G(n, cfg.p);
  for (Eigen::Index r = 0; r < cfg.p; ++r)
    for (Eigen::Index i = 0; i < n; ++i) G(i, r) = rng.normal();
  CovariateMatrix X;
  X.values = Matrix(llt_s.matrixL()) * G * Matrix(llt_c.matrixL()).transpose();
  X.names.reserve(static_cast<std::size_t>(cfg.p));
  for (int r = 0; r < cfg.p; ++r) X.names.push_back("X" + std::to_string(r + 1));
  X.standardized = false;
  return X;
}

/// Influential-coefficient layout: three (prevalence, magnitude) pairs over
/// the first six covariates; affected taxa drawn without replacement,
/// independently per covariate; remaining columns zero.
inline std::pair<Matrix, std::vector<int>> assign_coefficients(const SimConfig& cfg, Rng& rng) {
  Matrix beta = Matrix::Zero(cfg.m, cfg.p);
  const std::array<std::pair<double, double>, 6> plan = {{{cfg.prevalences[0], cfg.large_effect},
                                                          {cfg.prevalences[0], cfg.small_effect},
                                                          {cfg.prevalences[1], cfg.large_effect},
                                                          {cfg.prevalences[1], cfg.small_effect},
                                                          {cfg.prevalences[2], cfg.large_effect},
                                                          {cfg.prevalences[2], cfg.small_effect}}};
  for (std::size_t r = 0; r < plan.size() && r < static_cast<std::size_t>(cfg.p); ++r) {
    const auto [prevalence, magnitude] = plan[r];
    const int count = static_cast<int>(std::lround(prevalence * cfg.m));
    std::vector<int> idx(static_cast<std::size_t>(cfg.m));
    std::iota(idx.begin(), idx.end(), 0);
    for (int c = 0; c < count; ++c) {
      const auto pick = c + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(cfg.m - c)));
      std::swap(idx[static_cast<std::size_t>(c)], idx[static_cast<std::size_t>(pick)]);
      beta(idx[static_cast<std::size_t>(c)], static_cast<Eigen::Index>(r)) = magnitude;
    }
  }
  std::vector<int> m_star(static_cast<std::size_t>(cfg.p), 0);
  for (Eigen::Index r = 0; r < cfg.p; ++r)
    m_star[static_cast<std::size_t>(r)] = (beta.col(r).array() != 0.0).any() ? 1 : 0;
  return {beta, m_star};
}

/// Latent draw Z_j ~ N(X beta_j, 0.95 Sigma_z + 0.05 I) (taxa independent),
/// or the separable c(j,j') (x) 0.95 Sigma_z structural kernel plus an
/// independent 0.05-variance nugget (AR mode); Y = 1{Z > 0}.
inline PresenceMatrix draw_responses(const Matrix& X, const Matrix& beta, const Matrix& sigma_z,
                                     TaxaDep taxa, Rng& rng) {
  const Eigen::Index n = X.rows();
  const Eigen::Index m = beta.rows();
  const Matrix mean = X * beta.transpose();
  Matrix G(n, m);
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < n; ++i) G(i, j) = rng.normal();
  Matrix Z;
  if (taxa == TaxaDep::Ind) {
    Matrix C = 0.95 * sigma_z;
    C.diagonal().array() += 0.05;
    const auto llt = chol_with_generator_jitter(std::move(C), "draw_responses");
    Z = mean + Matrix(llt.matrixL()) * G;
  } else {
    const auto llt_s = chol_with_generator_jitter(0.95 * sigma_z, "draw_responses structural");
    const auto llt_c = chol_with_generator_jitter(ar_cross_dependence(m), "draw_responses cross");
    Z = mean + Matrix(llt_s.matrixL()) * G * Matrix(llt_c.matrixL()).transpose();
    const double nugget_sd = std::sqrt(0.05);
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index i = 0; i < n; ++i) Z(i, j) += nugget_sd * rng.normal();
  }
  PresenceMatrix Y;
  Y.values = (Z.array() > 0.0).cast<double>();
  Y.taxon_names.reserve(static_cast<std::size_t>(m));
  for (Eigen::Index j = 0; j < m; ++j) Y.taxon_names.push_back("T" + std::to_string(j + 1));
  return Y;
}

/// One full replicate, deterministic given (cfg.seed, replicate).
inline SimulatedDataset generate_replicate(const SimConfig& cfg, int replicate) {
  Rng rng = Rng::substream(cfg.seed, static_cast<std::uint64_t>(replicate) + 1);
  SimulatedDataset out;
  out.data.locations = unit_grid(cfg.grid_side);
  out.data.covariates = draw_covariates(out.data.locations, cfg, rng);
  auto [beta, m_star] = assign_coefficients(cfg, rng);
  const Matrix sigma_z = build_sigma_z(cfg.spatial, out.data.locations);
  out.data.presence = draw_responses(out.data.covariates.values, beta, sigma_z, cfg.taxa, rng);
  out.beta_truth = std::move(beta);
  out.m_star = std::move(m_star);
  return out;
}

}  // namespace snvs
