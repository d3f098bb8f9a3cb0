#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>
#include <vector>

#include "snvs/parallel.hpp"
#include "snvs/rng.hpp"
#include "snvs/types.hpp"

namespace snvs {

/// Gower-centered inner product matrix G = -1/2 J A J with A the squared
/// dissimilarities and J the centering projection.
inline Matrix gower_center(const Matrix& D) {
  Matrix A = (-0.5 * D.array().square()).matrix();
  const Vector rm = A.rowwise().mean();
  const double gm = rm.mean();
  A.colwise() -= rm;
  A.rowwise() -= rm.transpose();
  A.array() += gm;
  return A;
}

/// Orthonormal directions spanning the sequential (Type I) fit, one column
/// per covariate in input order, all orthogonal to the intercept.
inline Matrix sequential_covariate_basis(const Matrix& X, const std::vector<std::string>& names) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  Matrix Q(n, p);
  for (Eigen::Index r = 0; r < p; ++r) {
    Vector v = X.col(r);
    const double scale = std::max(v.norm(), 1e-300);
    for (int pass = 0; pass < 2; ++pass) {  // re-orthogonalize for stability
      v.array() -= v.mean();
      for (Eigen::Index c = 0; c < r; ++c) v -= Q.col(c) * Q.col(c).dot(v);
    }
    const double norm = v.norm();
    if (norm < 1e-8 * scale) {
      const std::string name =
          r < static_cast<Eigen::Index>(names.size()) ? names[static_cast<std::size_t>(r)]
                                                      : std::to_string(r + 1);
      throw data_error("permanova: covariate '" + name +
                       "' is collinear with the intercept or earlier covariates");
    }
    Q.col(r) = v / norm;
  }
  return Q;
}

/// Sequential pseudo-F statistics for sample permutation `perm`
/// (D_perm(i,j) = D(perm[i], perm[j])).
inline Vector permanova_f_stats(const Matrix& G, const Matrix& Q, const std::vector<int>& perm) {
  const Eigen::Index n = G.rows();
  const Eigen::Index p = Q.cols();
  const double total = G.trace();
  Vector F = Vector::Zero(p);
  if (total <= 1e-12) return F;  // all dissimilarities zero: no variation to partition
  Matrix U(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    U.row(perm[static_cast<std::size_t>(i)]) = Q.row(i);
  const Matrix GU = G * U;
  double explained = 0.0;
  Vector ss(p);
  for (Eigen::Index r = 0; r < p; ++r) {
    ss(r) = U.col(r).dot(GU.col(r));
    explained += ss(r);
  }
  const double ss_res = total - explained;
  const double df_res = static_cast<double>(n - p - 1);
  if (df_res <= 0.0 || std::abs(ss_res) < 1e-300) return F;
  for (Eigen::Index r = 0; r < p; ++r) F(r) = ss(r) / (ss_res / df_res);
  return F;
}

struct PermanovaResult {
  Vector F;
  Vector p_values;
  int n_perm = 0;
  std::uint64_t seed = 0;
  double total_ss = 0.0;
  std::vector<std::string> covariate_names;
  std::string ss_type = "sequential";
};

/// Location-level permutation test: rows/columns of D are permuted jointly,
/// preserving any cross-dependence between taxa. Sequential sums of squares,
/// covariates entered in column order; p = (1 + #{F_perm >= F_obs}) / (1 + n_perm).
inline PermanovaResult permanova(const Matrix& D, const CovariateMatrix& X, int n_perm,
                                 std::uint64_t seed, int threads = 1) {
  const Eigen::Index n = D.rows();
  if (D.cols() != n) throw data_error("permanova: dissimilarity matrix must be square");
  if ((D - D.transpose()).cwiseAbs().maxCoeff() > 1e-10)
    throw data_error("permanova: dissimilarity matrix must be symmetric");
  if (D.diagonal().cwiseAbs().maxCoeff() > 1e-12)
    throw data_error("permanova: dissimilarity matrix must have a zero diagonal");
  if (X.values.rows() != n) throw data_error("permanova: covariate rows do not match D");
  if (n_perm < 99) throw data_error("permanova: n_perm must be >= 99");

  const Matrix G = gower_center(D);
  const Matrix Q = sequential_covariate_basis(X.values, X.names);
  const Eigen::Index p = Q.cols();

  std::vector<int> identity(static_cast<std::size_t>(n));
  std::iota(identity.begin(), identity.end(), 0);
  const Vector F_obs = permanova_f_stats(G, Q, identity);

  std::vector<std::uint8_t> hits(static_cast<std::size_t>(n_perm) * static_cast<std::size_t>(p), 0);
  parallel_for(static_cast<std::size_t>(n_perm), threads, [&](std::size_t t) {
    Rng rng = Rng::substream(seed, t + 1);
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = perm.size() - 1; i > 0; --i)
      std::swap(perm[i], perm[static_cast<std::size_t>(rng.uniform_int(i + 1))]);
    const Vector F = permanova_f_stats(G, Q, perm);
    for (Eigen::Index r = 0; r < p; ++r)
      hits[t * static_cast<std::size_t>(p) + static_cast<std::size_t>(r)] =
          F(r) >= F_obs(r) - 1e-12 ? 1 : 0;
  });

  PermanovaResult out;
  out.F = F_obs;
  out.p_values.resize(p);
  for (Eigen::Index r = 0; r < p; ++r) {
    long count = 0;
    for (int t = 0; t < n_perm; ++t)
      count += hits[static_cast<std::size_t>(t) * static_cast<std::size_t>(p) +
                    static_cast<std::size_t>(r)];
    out.p_values(r) = (1.0 + static_cast<double>(count)) / (1.0 + n_perm);
  }
  out.n_perm = n_perm;
  out.seed = seed;
  out.total_ss = G.trace();
  out.covariate_names = X.names;
  return out;
}

/// Exact p-values over all n! sample permutations (n <= 9).
inline Vector permanova_exhaustive(const Matrix& D, const CovariateMatrix& X) {
  const Eigen::Index n = D.rows();
  if (n > 9) throw data_error("permanova_exhaustive: n! enumeration limited to n <= 9");
  const Matrix G = gower_center(D);
  const Matrix Q = sequential_covariate_basis(X.values, X.names);
  const Eigen::Index p = Q.cols();
  std::vector<int> identity(static_cast<std::size_t>(n));
  std::iota(identity.begin(), identity.end(), 0);
  const Vector F_obs = permanova_f_stats(G, Q, identity);

  std::vector<int> perm = identity;
  Eigen::VectorXd counts = Vector::Zero(p);
  long total = 0;
  do {
    const Vector F = permanova_f_stats(G, Q, perm);
    for (Eigen::Index r = 0; r < p; ++r)
      if (F(r) >= F_obs(r) - 1e-12) counts(r) += 1.0;
    ++total;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return counts / static_cast<double>(total);
}

}  // namespace snvs
