#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <set>
#include <utility>

#include "snvs/model.hpp"
#include "snvs/normal.hpp"
#include "snvs/parallel.hpp"
#include "snvs/rng.hpp"
#include "snvs/types.hpp"

namespace snvs {

inline double lbeta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

// ---------------------------------------------------------------------------
// Full-conditional parameter helpers. The sampler draws through these, and
// the tests pin them against hand algebra.
// ---------------------------------------------------------------------------

/// beta0_j | ... ~ N(sum(resid) / (n + (1-rho) tau0), (1-rho) / (n + (1-rho) tau0)).
inline std::pair<double, double> intercept_posterior(double resid_sum, Eigen::Index n, double rho,
                                                     double tau0) {
  const double denom = static_cast<double>(n) + (1.0 - rho) * tau0;
  return {resid_sum / denom, (1.0 - rho) / denom};
}

/// logit(pi*_jr) = logit(pi_r) - [SSE_with - SSE_without] / (2 (1 - rho)).
inline double delta_inclusion_logit(double pi_r, double rho, double sse_with,
                                    double sse_without) {
  return std::log(pi_r) - std::log1p(-pi_r) - (sse_with - sse_without) / (2.0 * (1.0 - rho));
}

/// Mixture weight W_r of the pi_r full conditional, computed in log space.
inline double pi_mixture_weight(double omega, double theta, Eigen::Index m, int M_r) {
  if (omega <= 0.0) return 0.0;
  if (omega >= 1.0) return 1.0;
  const double mm = static_cast<double>(m);
  const double log_num = std::log(omega) + std::log(theta) + lbeta(1.0 + M_r, theta + mm - M_r);
  const double log_alt = std::log1p(-omega) + lbeta(1.0 + M_r, 1.0 + mm - M_r);
  return 1.0 / (1.0 + std::exp(log_alt - log_num));
}

/// Stick-breaking weights p_k = V_k prod_{u<k} (1 - V_u); V.back() must be 1.
inline Vector stick_weights(const Vector& V) {
  const Eigen::Index K = V.size();
  Vector p(K);
  double remaining = 1.0;
  for (Eigen::Index k = 0; k < K; ++k) {
    p(k) = V(k) * remaining;
    remaining *= (1.0 - V(k));
  }
  return p;
}

/// D | ... ~ Gamma(a_d + K - 1, b_d - sum_{u<K} log(1 - V_u)).
inline std::pair<double, double> dp_posterior(const Vector& V, double a_d, double b_d) {
  const Eigen::Index K = V.size();
  double rate = b_d;
  for (Eigen::Index u = 0; u + 1 < K; ++u) rate -= std::log1p(-std::min(V(u), 1.0 - 1e-12));
  return {a_d + static_cast<double>(K) - 1.0, rate};
}

/// mu0 | ... ~ N(sum_k mu_k / (K + rho tau_mu0), rho / (K + rho tau_mu0) I).
inline std::pair<Vector, double> global_mean_posterior(const Matrix& mu, double rho,
                                                       double tau_mu0) {
  const double denom = static_cast<double>(mu.rows()) + rho * tau_mu0;
  return {Vector(mu.colwise().sum() / denom), rho / denom};
}

/// Precision/location pair (P, b) of a multivariate normal full conditional
/// with mean P^{-1} b and covariance P^{-1}.
struct MvnNatural {
  Matrix precision;
  Vector shift;
};

/// gamma_j | ... with X_{*j} = X diag(delta_j):
/// precision X_{*j}'X_{*j}/(1-rho) + T_gamma, shift X_{*j}' r_j / (1-rho).
inline MvnNatural gamma_posterior(const Matrix& XtX, const Vector& x_t_resid,
                                  const Eigen::Ref<const Eigen::VectorXi>& delta_row,
                                  const Vector& tau, double rho) {
  const Eigen::Index p = XtX.rows();
  MvnNatural out;
  out.precision.resize(p, p);
  out.shift.resize(p);
  const double inv = 1.0 / (1.0 - rho);
  for (Eigen::Index a = 0; a < p; ++a) {
    for (Eigen::Index b = 0; b < p; ++b)
      out.precision(a, b) = delta_row(a) && delta_row(b) ? XtX(a, b) * inv : 0.0;
    out.precision(a, a) += tau(tau.size() == 1 ? 0 : a);
    out.shift(a) = delta_row(a) ? x_t_resid(a) * inv : 0.0;
  }
  return out;
}

/// mu_k | ... for an occupied cluster: precision n_k/(1-rho) Psi'Psi + I/rho,
/// shift mu0/rho + Psi' sum_{j: g_j=k} r0_j / (1-rho).
inline MvnNatural cluster_mean_posterior(const Matrix& PsiTPsi, const Vector& psi_t_resid_sum,
                                         int n_k, double rho, const Vector& mu0) {
  MvnNatural out;
  out.precision = (static_cast<double>(n_k) / (1.0 - rho)) * PsiTPsi;
  out.precision.diagonal().array() += 1.0 / rho;
  out.shift = mu0 / rho + psi_t_resid_sum / (1.0 - rho);
  return out;
}

/// Unnormalized log label probabilities for one taxon:
/// log p_k + (mu_k' Psi' r0 - mu_k' Psi'Psi mu_k / 2) / (1 - rho).
inline Vector label_scores(const Matrix& mu, const Vector& log_p, const Matrix& PsiTPsi,
                           const Vector& psi_t_resid, double rho) {
  const Eigen::Index K = mu.rows();
  Vector score(K);
  const double inv = 1.0 / (1.0 - rho);
  for (Eigen::Index k = 0; k < K; ++k) {
    const Vector mu_k = mu.row(k).transpose();
    score(k) = log_p(k) + (mu_k.dot(psi_t_resid) - 0.5 * mu_k.dot(PsiTPsi * mu_k)) * inv;
  }
  return score;
}

/// Cholesky with the one-shot 1e-8 jitter policy.
inline Eigen::LLT<Matrix> llt_with_jitter(Matrix A, const char* what) {
  Eigen::LLT<Matrix> llt(A);
  if (llt.info() != Eigen::Success) {
    A.diagonal().array() += 1e-8;
    llt.compute(A);
    if (llt.info() != Eigen::Success)
      throw data_error(std::string(what) + ": Cholesky failed even after 1e-8 jitter");
  }
  return llt;
}

inline Vector draw_mvn_from_natural(const MvnNatural& nat, Rng& rng, const char* what) {
  const auto llt = llt_with_jitter(nat.precision, what);
  Vector z(nat.shift.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
  return llt.solve(nat.shift) + llt.matrixU().solve(z);
}

/// Random-walk Metropolis on the logit scale for a parameter in (0, 1).
/// The logit-transform Jacobian log x(1-x) is applied here, so log_post is
/// the target log density of x itself.
template <class LogPost>
inline std::pair<double, bool> logit_metropolis_step(double x, double sigma2, LogPost&& log_post,
                                                     Rng& rng, double clamp_eps = 1e-6) {
  const double t = std::log(x) - std::log1p(-x);
  const double t_new = t + std::sqrt(sigma2) * rng.normal();
  double x_new = 1.0 / (1.0 + std::exp(-t_new));
  x_new = std::clamp(x_new, clamp_eps, 1.0 - clamp_eps);
  const double log_ratio = log_post(x_new) - log_post(x) + std::log(x_new) + std::log1p(-x_new) -
                           std::log(x) - std::log1p(-x);
  if (log_ratio >= 0.0 || std::log(rng.uniform()) < log_ratio) return {x_new, true};
  return {x, false};
}

/// log posterior of rho given everything else (uniform prior drops out):
/// -(nm/2) log(1-rho) - (LK/2) log(rho) - ss_mu/(2 rho) - sse/(2 (1-rho)).
inline double rho_log_posterior(double rho, double nm, double LK, double ss_mu, double sse) {
  return -0.5 * nm * std::log1p(-rho) - 0.5 * LK * std::log(rho) - ss_mu / (2.0 * rho) -
         sse / (2.0 * (1.0 - rho));
}

/// Prior inclusion-probability draw from omega Beta(1, theta) + (1-omega) U(0,1).
inline double draw_pi_mixture(double omega, double theta, Rng& rng) {
  if (rng.uniform() < omega) return rng.beta(1.0, theta);
  return rng.uniform();
}

/// Monte Carlo estimate of the prior null probability P(M_r = 0).
inline double prior_null_prob(double omega, double theta, Eigen::Index m, long n_draws, Rng& rng) {
  double acc = 0.0;
  for (long i = 0; i < n_draws; ++i) {
    const double pi = draw_pi_mixture(omega, theta, rng);
    acc += std::exp(static_cast<double>(m) * std::log1p(-pi));
  }
  return acc / static_cast<double>(n_draws);
}

/// Prior co-clustering probability phi = sum_k p_k^2.
inline double coclustering_phi(const Vector& p) { return p.squaredNorm(); }

/// Antoniak approximation E[K | m, D] ~ D log[(m + D) / D].
inline double expected_cluster_count(Eigen::Index m, double D) {
  return D * std::log((static_cast<double>(m) + D) / D);
}

// ---------------------------------------------------------------------------
// The sampler.
// ---------------------------------------------------------------------------

/// Systematic-scan Gibbs sampler for the spatial (SNP) and nonspatial (NS)
/// variants. Scan order: Z, beta0, (gamma, delta) per taxon, pi, precisions,
/// cluster labels, sticks, D, cluster means, grand mean, rho.
///
/// Per-taxon draws (Z columns, intercepts, gamma/delta rows, labels) come
/// from per-taxon RNG substreams, so results are independent of thread count
/// and bit-identical for a fixed seed.
class GibbsSampler {
 public:
  GibbsSampler(Matrix Y, Matrix X, Matrix Psi, ModelConfig cfg)
      : Y_(std::move(Y)),
        X_(std::move(X)),
        Psi_(std::move(Psi)),
        cfg_(cfg),
        n_(Y_.rows()),
        m_(Y_.cols()),
        p_(X_.cols()),
        master_(Rng::substream(cfg.seed, 0)) {
    cfg_.validate();
    if (X_.rows() != n_) throw data_error("run_chain: X rows do not match Y rows");
    spatial_ = cfg_.variant == Variant::SNP;  // MAT runs the shared phases only
    if (spatial_) {
      if (Psi_.rows() != n_ || Psi_.cols() < 1)
        throw data_error("run_chain: SNP variant requires a basis with matching rows");
      L_ = Psi_.cols();
      K_ = cfg_.resolved_cluster_cap(m_);
      PsiTPsi_ = Psi_.transpose() * Psi_;
      // pipeline bases have orthogonal columns, making Psi'Psi diagonal and
      // the cluster-mean draw separable per coordinate
      const double scale = PsiTPsi_.diagonal().cwiseAbs().maxCoeff();
      psi_gram_diagonal_ =
          (PsiTPsi_ - Matrix(PsiTPsi_.diagonal().asDiagonal())).cwiseAbs().maxCoeff() <
          1e-7 * std::max(scale, 1.0);
    } else {
      L_ = 0;
      K_ = 1;
    }
    theta_ = cfg_.resolved_theta(m_);
    XtX_ = X_.transpose() * X_;
    x_sq_ = XtX_.diagonal();
    taxon_rngs_.reserve(static_cast<std::size_t>(m_));
    for (Eigen::Index j = 0; j < m_; ++j)
      taxon_rngs_.push_back(Rng::substream(cfg.seed, static_cast<std::uint64_t>(j) + 1));
    init_state();
  }

  ChainState& state() { return st_; }
  const ChainState& state() const { return st_; }
  const Matrix& data() const { return Y_; }
  const ModelConfig& config() const { return cfg_; }
  Eigen::Index basis_size() const { return L_; }
  int cluster_cap() const { return K_; }

  // Hooks for samplers that manage their own spatial term (MAT variant):
  // S is the n x m spatial contribution added to every latent mean.
  Matrix& spatial_effects() { return S_; }
  Rng& taxon_rng(Eigen::Index j) { return taxon_rngs_[static_cast<std::size_t>(j)]; }
  Rng& master_rng() { return master_; }
  Matrix residual_excluding_spatial() const {
    Matrix R0 = st_.Z - XB_;
    R0.rowwise() -= st_.beta0.transpose();
    return R0;
  }
  void record_draw(PosteriorSamples& out, Eigen::Index d) const { record(out, d); }
  void check_state_finite(int iter) const { check_finite(iter); }

  /// One full systematic scan.
  void sweep() {
    update_latent();
    update_intercepts();
    update_gamma_delta();
    update_pi();
    update_precisions();
    if (spatial_) {
      refresh_residuals();
      update_labels();
      update_sticks();
      update_dp_precision();
      update_cluster_means();
      update_global_mean();
      refresh_spatial_effects();
      update_rho();
    }
  }

  /// Residual matrices consumed by the label and cluster-mean phases.
  void refresh_residuals() {
    R0_ = st_.Z - XB_;
    R0_.rowwise() -= st_.beta0.transpose();
    PT_ = Psi_.transpose() * R0_;  // L x m
  }

  /// Burn-in proposal-variance adaptation: call once per 100-iteration window.
  void adapt() {
    if (st_.window_size == 0) return;
    const double rate = static_cast<double>(st_.accept_window) / st_.window_size;
    if (rate > 0.7)
      st_.sigma2_M *= 1.3;
    else if (rate < 0.3)
      st_.sigma2_M /= 1.3;
    st_.accept_window = 0;
    st_.window_size = 0;
  }

  PosteriorSamples run() {
    const Eigen::Index draws = (cfg_.iterations - cfg_.burn_in) / cfg_.thin;
    PosteriorSamples out;
    out.variant = cfg_.variant;
    out.n_taxa = m_;
    out.n_cov = p_;
    out.M.resize(draws, p_);
    if (cfg_.store_beta_draws) out.beta.resize(draws, m_ * p_);
    out.g.resize(draws, m_);
    out.rho.resize(draws);
    out.D.resize(draws);
    out.cluster_count.assign(static_cast<std::size_t>(draws), 0);

    long post_accept = 0, post_total = 0;
    Eigen::Index d = 0;
    for (int iter = 1; iter <= cfg_.iterations; ++iter) {
      const int before = st_.accept_window;
      const int before_n = st_.window_size;
      sweep();
      if (iter <= cfg_.burn_in) {
        if (iter % 100 == 0) adapt();
      } else if (spatial_) {
        post_accept += st_.accept_window - before;
        post_total += st_.window_size - before_n;
        if (st_.window_size > 1'000'000) {  // keep tallies bounded post burn-in
          st_.accept_window = 0;
          st_.window_size = 0;
        }
      }
      if (iter > cfg_.burn_in && (iter - cfg_.burn_in) % cfg_.thin == 0) {
        record(out, d);
        ++d;
      }
      check_finite(iter);
    }
    if (post_total > 0) out.accept_rate = static_cast<double>(post_accept) / post_total;
    out.sigma2_M_final = st_.sigma2_M;
    return out;
  }

  // --- Geweke simulator support -------------------------------------------

  /// Draw the full state from the prior, then data from the model.
  void draw_state_from_prior() {
    st_.tau0 = master_.gamma(cfg_.a0, cfg_.b0);
    for (Eigen::Index j = 0; j < m_; ++j) st_.beta0(j) = master_.normal() / std::sqrt(st_.tau0);
    if (cfg_.slab == SlabVariance::Common) {
      st_.tau_slab(0) = master_.gamma(cfg_.a_gamma, cfg_.b_gamma);
    } else {
      for (Eigen::Index r = 0; r < p_; ++r) st_.tau_slab(r) = master_.gamma(cfg_.a_r, cfg_.b_r);
    }
    for (Eigen::Index r = 0; r < p_; ++r) {
      st_.pi(r) = draw_pi_mixture(cfg_.omega, theta_, master_);
      const double sd = 1.0 / std::sqrt(st_.tau_slab(st_.tau_slab.size() == 1 ? 0 : r));
      for (Eigen::Index j = 0; j < m_; ++j) {
        st_.gamma(j, r) = sd * master_.normal();
        st_.delta(j, r) = master_.uniform() < st_.pi(r) ? 1 : 0;
      }
    }
    if (spatial_) {
      st_.rho = std::clamp(master_.uniform(), 1e-6, 1.0 - 1e-6);
      st_.tau_mu0 = master_.gamma(cfg_.a_mu0, cfg_.b_mu0);
      for (Eigen::Index l = 0; l < L_; ++l)
        st_.mu0(l) = master_.normal() / std::sqrt(st_.tau_mu0);
      st_.D = master_.gamma(cfg_.a_d, cfg_.b_d);
      for (int u = 0; u + 1 < K_; ++u)
        st_.V(u) = std::min(master_.beta(1.0, st_.D), 1.0 - 1e-12);
      st_.V(K_ - 1) = 1.0;
      st_.p_k = stick_weights(st_.V);
      for (int k = 0; k < K_; ++k)
        for (Eigen::Index l = 0; l < L_; ++l)
          st_.mu(k, l) = st_.mu0(l) + std::sqrt(st_.rho) * master_.normal();
      std::vector<double> w(st_.p_k.data(), st_.p_k.data() + K_);
      for (Eigen::Index j = 0; j < m_; ++j)
        st_.g[static_cast<std::size_t>(j)] = static_cast<int>(master_.categorical(w));
      refresh_spatial_effects();
    }
    refresh_B();
    regenerate_data_from_model();
  }

  /// Replace Y with a fresh draw from the model given the current state
  /// (unconstrained latent draw, then thresholding).
  void regenerate_data_from_model() {
    const Matrix mean = mean_matrix();
    const double sd = std::sqrt(1.0 - st_.rho);
    for (Eigen::Index j = 0; j < m_; ++j) {
      Rng& rng = taxon_rngs_[static_cast<std::size_t>(j)];
      for (Eigen::Index i = 0; i < n_; ++i) {
        st_.Z(i, j) = mean(i, j) + sd * rng.normal();
        Y_(i, j) = st_.Z(i, j) > 0.0 ? 1.0 : 0.0;
      }
    }
  }

  int occupied_clusters() const {
    if (!spatial_) return 0;
    std::set<int> labels(st_.g.begin(), st_.g.end());
    return static_cast<int>(labels.size());
  }

  Vector inclusion_counts() const {
    Vector M(p_);
    for (Eigen::Index r = 0; r < p_; ++r) M(r) = st_.delta.col(r).sum();
    return M;
  }

  // Individual scan phases. Exposed so tests can pin each full conditional
  // against its printed form; sweep() is the production path.

  /// Synchronize the cached covariate contribution X (delta * gamma)' after
  /// editing gamma or delta directly.
  void refresh_B() {
    B_ = st_.delta.cast<double>().cwiseProduct(st_.gamma);
    XB_ = X_ * B_.transpose();
  }

  void refresh_spatial_effects() {
    if (!spatial_) return;
    for (Eigen::Index j = 0; j < m_; ++j)
      S_.col(j) = Psi_ * st_.mu.row(st_.g[static_cast<std::size_t>(j)]).transpose();
  }

 private:
  void init_state() {
    st_.Z.resize(n_, m_);
    for (Eigen::Index j = 0; j < m_; ++j)
      for (Eigen::Index i = 0; i < n_; ++i) st_.Z(i, j) = Y_(i, j) > 0.5 ? 0.5 : -0.5;
    st_.beta0 = Vector::Zero(m_);
    st_.gamma = Matrix::Zero(m_, p_);
    st_.delta = IntMatrix::Zero(m_, p_);
    st_.pi = Vector::Constant(p_, 0.5);
    st_.tau0 = 1.0;
    st_.tau_slab = Vector::Ones(cfg_.slab == SlabVariance::Common ? 1 : p_);
    st_.g.assign(static_cast<std::size_t>(m_), 0);
    st_.V = Vector::Constant(K_, 0.5);
    st_.V(K_ - 1) = 1.0;
    st_.p_k = stick_weights(st_.V);
    st_.D = 1.0;
    st_.mu = Matrix::Zero(K_, std::max<Eigen::Index>(L_, 1));
    st_.mu0 = Vector::Zero(std::max<Eigen::Index>(L_, 1));
    st_.tau_mu0 = 1.0;
    st_.rho = cfg_.variant == Variant::NS ? 0.0 : 0.5;
    st_.sigma2_M = 1.0;
    B_ = Matrix::Zero(m_, p_);
    S_ = Matrix::Zero(n_, m_);
    XB_ = Matrix::Zero(n_, m_);
    R0_ = Matrix::Zero(n_, m_);
  }

  Matrix mean_matrix() const {
    Matrix mean = XB_ + S_;
    mean.rowwise() += st_.beta0.transpose();
    return mean;
  }

 public:
  void update_latent() {
    const Matrix mean = mean_matrix();
    const double var = 1.0 - st_.rho;
    parallel_for(static_cast<std::size_t>(m_), cfg_.threads, [&](std::size_t sj) {
      const auto j = static_cast<Eigen::Index>(sj);
      Rng& rng = taxon_rngs_[sj];
      for (Eigen::Index i = 0; i < n_; ++i) {
        if (Y_(i, j) > 0.5)
          st_.Z(i, j) = rng.truncated_normal(mean(i, j), var, 0.0,
                                             std::numeric_limits<double>::infinity());
        else
          st_.Z(i, j) = rng.truncated_normal(mean(i, j), var,
                                             -std::numeric_limits<double>::infinity(), 0.0);
      }
    });
  }

  void update_intercepts() {
    parallel_for(static_cast<std::size_t>(m_), cfg_.threads, [&](std::size_t sj) {
      const auto j = static_cast<Eigen::Index>(sj);
      Rng& rng = taxon_rngs_[sj];
      const double resid_sum = (st_.Z.col(j) - XB_.col(j) - S_.col(j)).sum();
      const auto [mean, var] = intercept_posterior(resid_sum, n_, st_.rho, st_.tau0);
      st_.beta0(j) = mean + std::sqrt(var) * rng.normal();
    });
  }

  void update_gamma_delta() {
    parallel_for(static_cast<std::size_t>(m_), cfg_.threads, [&](std::size_t sj) {
      const auto j = static_cast<Eigen::Index>(sj);
      Rng& rng = taxon_rngs_[sj];
      const Vector r_j = st_.Z.col(j) - Vector::Constant(n_, st_.beta0(j)) - S_.col(j);
      const Vector x_t_resid = X_.transpose() * r_j;

      const auto nat =
          gamma_posterior(XtX_, x_t_resid, st_.delta.row(j).transpose(), st_.tau_slab, st_.rho);
      st_.gamma.row(j) = draw_mvn_from_natural(nat, rng, "update_gamma").transpose();

      // sequential delta refresh against the maintained full residual
      Vector e = r_j - X_ * st_.delta.row(j).cast<double>().cwiseProduct(st_.gamma.row(j)).transpose();
      const double inv2 = 1.0 / (2.0 * (1.0 - st_.rho));
      for (Eigen::Index r = 0; r < p_; ++r) {
        const double gam = st_.gamma(j, r);
        double cross = X_.col(r).dot(e);
        if (st_.delta(j, r) == 1) cross += gam * x_sq_(r);
        const double sse_diff = gam * gam * x_sq_(r) - 2.0 * gam * cross;
        const double logit_p =
            std::log(st_.pi(r)) - std::log1p(-st_.pi(r)) - sse_diff * inv2;
        const int d_new = rng.uniform() < 1.0 / (1.0 + std::exp(-logit_p)) ? 1 : 0;
        if (d_new != st_.delta(j, r)) {
          if (d_new == 1)
            e -= X_.col(r) * gam;
          else
            e += X_.col(r) * gam;
          st_.delta(j, r) = d_new;
        }
      }
    });
    refresh_B();
  }

  void update_pi() {
    const double mm = static_cast<double>(m_);
    for (Eigen::Index r = 0; r < p_; ++r) {
      const int M_r = st_.delta.col(r).sum();
      const double W = pi_mixture_weight(cfg_.omega, theta_, m_, M_r);
      if (master_.uniform() < W)
        st_.pi(r) = master_.beta(1.0 + M_r, theta_ + mm - M_r);
      else
        st_.pi(r) = master_.beta(1.0 + M_r, 1.0 + mm - M_r);
    }
  }

  void update_precisions() {
    st_.tau0 =
        master_.gamma(cfg_.a0 + 0.5 * static_cast<double>(m_), cfg_.b0 + 0.5 * st_.beta0.squaredNorm());
    if (cfg_.slab == SlabVariance::Common) {
      st_.tau_slab(0) = master_.gamma(cfg_.a_gamma + 0.5 * static_cast<double>(m_ * p_),
                                      cfg_.b_gamma + 0.5 * st_.gamma.squaredNorm());
    } else {
      for (Eigen::Index r = 0; r < p_; ++r)
        st_.tau_slab(r) = master_.gamma(cfg_.a_r + 0.5 * static_cast<double>(m_),
                                        cfg_.b_r + 0.5 * st_.gamma.col(r).squaredNorm());
    }
    if (spatial_)
      st_.tau_mu0 = master_.gamma(cfg_.a_mu0 + 0.5 * static_cast<double>(L_),
                                  cfg_.b_mu0 + 0.5 * st_.mu0.squaredNorm());
  }

  void update_labels() {
    Vector log_p(K_);
    {
      double log_remaining = 0.0;
      for (int k = 0; k < K_; ++k) {
        log_p(k) = std::log(st_.V(k)) + log_remaining;
        log_remaining += std::log1p(-std::min(st_.V(k), 1.0 - 1e-12));
      }
    }
    Vector q(K_);
    for (int k = 0; k < K_; ++k) {
      const Vector mu_k = st_.mu.row(k).transpose();
      q(k) = mu_k.dot(PsiTPsi_ * mu_k);
    }
    const double inv = 1.0 / (1.0 - st_.rho);
    parallel_for(static_cast<std::size_t>(m_), cfg_.threads, [&](std::size_t sj) {
      const auto j = static_cast<Eigen::Index>(sj);
      Rng& rng = taxon_rngs_[sj];
      Vector score(K_);
      for (int k = 0; k < K_; ++k)
        score(k) = log_p(k) + (st_.mu.row(k).dot(PT_.col(j)) - 0.5 * q(k)) * inv;
      const double top = score.maxCoeff();
      if (!std::isfinite(top))
        throw data_error("update_cluster_labels: all label log-probabilities are -inf");
      std::vector<double> w(static_cast<std::size_t>(K_));
      for (int k = 0; k < K_; ++k) w[static_cast<std::size_t>(k)] = std::exp(score(k) - top);
      st_.g[sj] = static_cast<int>(rng.categorical(w));
    });
  }

  void update_sticks() {
    std::vector<int> counts(static_cast<std::size_t>(K_), 0);
    for (int label : st_.g) ++counts[static_cast<std::size_t>(label)];
    int above = m_ > 0 ? static_cast<int>(m_) : 0;
    for (int k = 0; k < K_ - 1; ++k) {
      above -= counts[static_cast<std::size_t>(k)];
      st_.V(k) = std::min(master_.beta(1.0 + counts[static_cast<std::size_t>(k)], st_.D + above),
                          1.0 - 1e-12);
    }
    st_.V(K_ - 1) = 1.0;
    st_.p_k = stick_weights(st_.V);
  }

  void update_dp_precision() {
    const auto [shape, rate] = dp_posterior(st_.V, cfg_.a_d, cfg_.b_d);
    st_.D = master_.gamma(shape, rate);
  }

  void update_cluster_means() {
    std::vector<int> counts(static_cast<std::size_t>(K_), 0);
    Matrix sums = Matrix::Zero(L_, K_);
    for (Eigen::Index j = 0; j < m_; ++j) {
      const int k = st_.g[static_cast<std::size_t>(j)];
      ++counts[static_cast<std::size_t>(k)];
      sums.col(k) += PT_.col(j);
    }
    for (int k = 0; k < K_; ++k) {
      if (counts[static_cast<std::size_t>(k)] > 0) {
        if (psi_gram_diagonal_) {
          const double nk = static_cast<double>(counts[static_cast<std::size_t>(k)]);
          for (Eigen::Index l = 0; l < L_; ++l) {
            const double prec = nk / (1.0 - st_.rho) * PsiTPsi_(l, l) + 1.0 / st_.rho;
            const double shift = st_.mu0(l) / st_.rho + sums(l, k) / (1.0 - st_.rho);
            st_.mu(k, l) = shift / prec + master_.normal() / std::sqrt(prec);
          }
        } else {
          const auto nat = cluster_mean_posterior(PsiTPsi_, sums.col(k),
                                                  counts[static_cast<std::size_t>(k)], st_.rho,
                                                  st_.mu0);
          st_.mu.row(k) = draw_mvn_from_natural(nat, master_, "update_cluster_means").transpose();
        }
      } else {
        for (Eigen::Index l = 0; l < L_; ++l)
          st_.mu(k, l) = st_.mu0(l) + std::sqrt(st_.rho) * master_.normal();
      }
    }
  }

  void update_global_mean() {
    const auto [mean, var] = global_mean_posterior(st_.mu, st_.rho, st_.tau_mu0);
    const double sd = std::sqrt(var);
    for (Eigen::Index l = 0; l < L_; ++l) st_.mu0(l) = mean(l) + sd * master_.normal();
  }

  void update_rho() {
    const double nm = static_cast<double>(n_) * static_cast<double>(m_);
    const double LK = static_cast<double>(L_) * static_cast<double>(K_);
    double ss_mu = 0.0;
    for (int k = 0; k < K_; ++k) ss_mu += (st_.mu.row(k).transpose() - st_.mu0).squaredNorm();
    const double sse = (R0_ - S_).squaredNorm();
    const auto [rho_new, accepted] = logit_metropolis_step(
        st_.rho, st_.sigma2_M,
        [&](double r) { return rho_log_posterior(r, nm, LK, ss_mu, sse); }, master_);
    st_.rho = rho_new;
    st_.accept_window += accepted ? 1 : 0;
    st_.window_size += 1;
  }

 private:
  void record(PosteriorSamples& out, Eigen::Index d) const {
    for (Eigen::Index r = 0; r < p_; ++r) out.M(d, r) = st_.delta.col(r).sum();
    if (out.beta.size() > 0)
      for (Eigen::Index j = 0; j < m_; ++j)
        for (Eigen::Index r = 0; r < p_; ++r) out.beta(d, j * p_ + r) = B_(j, r);
    for (Eigen::Index j = 0; j < m_; ++j) out.g(d, j) = st_.g[static_cast<std::size_t>(j)];
    out.rho(d) = st_.rho;
    out.D(d) = spatial_ ? st_.D : 0.0;
    out.cluster_count[static_cast<std::size_t>(d)] = occupied_clusters();
  }

  void check_finite(int iter) const {
    auto fail = [&](const char* name) {
      throw data_error("run_chain: non-finite " + std::string(name) + " at iteration " +
                       std::to_string(iter));
    };
    if (!st_.Z.allFinite()) fail("Z");
    if (!st_.beta0.allFinite()) fail("beta0");
    if (!st_.gamma.allFinite()) fail("gamma");
    if (!std::isfinite(st_.tau0)) fail("tau0");
    if (spatial_) {
      if (!st_.mu.allFinite()) fail("mu");
      if (!std::isfinite(st_.rho)) fail("rho");
      if (!std::isfinite(st_.D)) fail("D");
    }
  }

  Matrix Y_;
  Matrix X_;
  Matrix Psi_;
  ModelConfig cfg_;
  Eigen::Index n_, m_, p_, L_ = 0;
  int K_ = 1;
  double theta_ = 1.0;
  bool spatial_ = true;
  bool psi_gram_diagonal_ = false;
  Matrix XtX_;
  Vector x_sq_;
  Matrix PsiTPsi_;
  ChainState st_;
  Matrix B_;   // m x p effective coefficients delta * gamma
  Matrix XB_;  // n x m covariate contribution
  Matrix S_;   // n x m spatial contribution
  Matrix R0_;  // n x m residual excluding the spatial term
  Matrix PT_;  // L x m Psi' R0
  Rng master_;
  std::vector<Rng> taxon_rngs_;
};

/// Fit the SNP or NS variant and return retained draws.
inline PosteriorSamples run_chain(const Matrix& Y, const Matrix& X, const Matrix& Psi,
                                  const ModelConfig& cfg,
                                  std::vector<std::string> taxon_names = {},
                                  std::vector<std::string> covariate_names = {}) {
  if (cfg.variant == Variant::MAT)
    throw data_error("run_chain: use fit_matern_variant for the MAT variant");
  GibbsSampler sampler(Y, X, Psi, cfg);
  PosteriorSamples out = sampler.run();
  out.taxon_names = std::move(taxon_names);
  out.covariate_names = std::move(covariate_names);
  return out;
}

}  // namespace snvs
