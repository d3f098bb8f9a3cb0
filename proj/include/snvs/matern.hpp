#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>

#include "snvs/mcmc.hpp"
#include "snvs/model.hpp"
#include "snvs/normal.hpp"
#include "snvs/types.hpp"

namespace snvs {

/// Matern correlation with the sqrt(2 kappa) length convention, so
/// kappa = 1/2 reduces to exp(-d / zeta).
inline double matern_correlation(double d, double kappa, double zeta) {
  if (d <= 0.0) return 1.0;
  const double x = std::sqrt(2.0 * kappa) * d / zeta;
  if (x < 1e-8) return 1.0;
  if (x > 700.0) return 0.0;
  return std::pow(2.0, 1.0 - kappa) / std::tgamma(kappa) * std::pow(x, kappa) *
         std::cyl_bessel_k(kappa, x);
}

struct MaternParams {
  double kappa = 1.0;       // smoothness, U(0, 2) prior
  double zeta = 1.0;        // range
  double sigma_zeta = 1.0;  // prior sd of log(zeta)
};

/// Builds Matern correlation matrices over a fixed distance matrix; Bessel
/// evaluations are shared across equal distances (lattices have few).
class MaternKernel {
 public:
  explicit MaternKernel(const Matrix& dist) : n_(dist.rows()) {
    idx_.resize(n_, n_);
    std::map<double, int> seen;
    for (Eigen::Index i = 0; i < n_; ++i)
      for (Eigen::Index j = 0; j < n_; ++j) {
        auto [it, inserted] = seen.try_emplace(dist(i, j), static_cast<int>(unique_.size()));
        if (inserted) unique_.push_back(dist(i, j));
        idx_(i, j) = it->second;
      }
  }

  Matrix correlation(double kappa, double zeta) const {
    std::vector<double> vals(unique_.size());
    for (std::size_t u = 0; u < unique_.size(); ++u)
      vals[u] = matern_correlation(unique_[u], kappa, zeta);
    Matrix R(n_, n_);
    for (Eigen::Index i = 0; i < n_; ++i)
      for (Eigen::Index j = 0; j < n_; ++j) R(i, j) = vals[static_cast<std::size_t>(idx_(i, j))];
    return R;
  }

 private:
  Eigen::Index n_;
  std::vector<double> unique_;
  Eigen::MatrixXi idx_;
};

/// Parametric spatial competitor: per-taxon effects xi_j ~ N(0, rho R(kappa, zeta)),
/// nugget variance 1 - rho, all non-spatial updates shared with the Gibbs core.
/// (kappa, zeta) move by a joint random-walk Metropolis on (logit(kappa/2), log zeta);
/// rho by the same logit random walk used for the SNP variant.
class MaternSampler {
 public:
  MaternSampler(Matrix Y, Matrix X, const Matrix& dist, ModelConfig cfg)
      : core_(std::move(Y), std::move(X), Matrix(), prepare(cfg)),
        kernel_(dist),
        n_(dist.rows()) {
    if (n_ > 2000)
      throw data_error("fit_matern_variant: dense n x n factorizations guard allows n <= 2000");
    double dmax = 0.0;
    std::vector<double> pos;
    for (Eigen::Index i = 0; i < n_; ++i)
      for (Eigen::Index j = i + 1; j < n_; ++j) {
        dmax = std::max(dmax, dist(i, j));
        if (dist(i, j) > 0.0) pos.push_back(dist(i, j));
      }
    if (pos.empty()) throw data_error("fit_matern_variant: no positive distances");
    std::nth_element(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(pos.size() / 2),
                     pos.end());
    params_.zeta = pos[pos.size() / 2];
    params_.kappa = 1.0;
    // 99th prior percentile of the range equals the maximum observed distance
    params_.sigma_zeta = std::max(std::log(dmax) / norm_quantile(0.99), 1e-3);
    xi_ = Matrix::Zero(n_, core_.data().cols());
    refresh_kernel_cache();
  }

  PosteriorSamples run() {
    const ModelConfig& cfg = core_.config();
    const Eigen::Index draws = (cfg.iterations - cfg.burn_in) / cfg.thin;
    const Eigen::Index m = core_.data().cols();
    const Eigen::Index p = core_.state().gamma.cols();
    PosteriorSamples out;
    out.variant = Variant::MAT;
    out.n_taxa = m;
    out.n_cov = p;
    out.M.resize(draws, p);
    if (cfg.store_beta_draws) out.beta.resize(draws, m * p);
    out.g.resize(draws, m);
    out.rho.resize(draws);
    out.D.resize(draws);
    out.cluster_count.assign(static_cast<std::size_t>(draws), 0);

    long rho_acc = 0, rho_tot = 0, kz_acc = 0, kz_tot = 0;
    int rho_win_acc = 0, rho_win = 0, kz_win_acc = 0, kz_win = 0;
    Eigen::Index d = 0;
    for (int iter = 1; iter <= cfg.iterations; ++iter) {
      core_.sweep();
      update_xi();
      const bool kz_ok = update_kappa_zeta();
      const bool rho_ok = update_rho();
      if (iter <= cfg.burn_in) {
        kz_win_acc += kz_ok;
        ++kz_win;
        rho_win_acc += rho_ok;
        ++rho_win;
        if (iter % 100 == 0) {
          adapt_window(sigma2_kz_, kz_win_acc, kz_win);
          adapt_window(rho_sigma2(), rho_win_acc, rho_win);
        }
      } else {
        rho_acc += rho_ok;
        ++rho_tot;
        kz_acc += kz_ok;
        ++kz_tot;
      }
      if (iter > cfg.burn_in && (iter - cfg.burn_in) % cfg.thin == 0) {
        core_.record_draw(out, d);
        ++d;
      }
      core_.check_state_finite(iter);
      if (!xi_.allFinite())
        throw data_error("fit_matern_variant: non-finite xi at iteration " + std::to_string(iter));
    }
    if (rho_tot > 0) out.accept_rate = static_cast<double>(rho_acc) / rho_tot;
    if (kz_tot > 0) out.accept_rate_aux = static_cast<double>(kz_acc) / kz_tot;
    out.sigma2_M_final = rho_sigma2();
    return out;
  }

  const MaternParams& params() const { return params_; }
  GibbsSampler& core() { return core_; }

 private:
  static ModelConfig prepare(ModelConfig cfg) {
    cfg.variant = Variant::MAT;
    return cfg;
  }

  double& rho_sigma2() { return core_.state().sigma2_M; }

  static void adapt_window(double& sigma2, int& acc, int& count) {
    if (count > 0) {
      const double rate = static_cast<double>(acc) / count;
      if (rate > 0.7)
        sigma2 *= 1.3;
      else if (rate < 0.3)
        sigma2 /= 1.3;
    }
    acc = 0;
    count = 0;
  }

  void refresh_kernel_cache() {
    Matrix R = kernel_.correlation(params_.kappa, params_.zeta);
    llt_R_ = llt_with_jitter(R, "matern correlation");
    logdet_R_ = 2.0 * llt_R_.matrixLLT().diagonal().array().log().sum();
    Rinv_ = llt_R_.solve(Matrix::Identity(n_, n_));
  }

  void update_xi() {
    const double rho = core_.state().rho;
    const Eigen::Index m = core_.data().cols();
    Matrix A = Rinv_ / rho;
    A.diagonal().array() += 1.0 / (1.0 - rho);
    const auto lltA = llt_with_jitter(A, "matern xi precision");
    const Matrix R0 = core_.residual_excluding_spatial();
    const Matrix mean = lltA.solve(R0 / (1.0 - rho));
    Matrix noise(n_, m);
    for (Eigen::Index j = 0; j < m; ++j) {
      Rng& rng = core_.taxon_rng(j);
      for (Eigen::Index i = 0; i < n_; ++i) noise(i, j) = rng.normal();
    }
    xi_ = mean + lltA.matrixU().solve(noise);
    core_.spatial_effects() = xi_;
  }

  double quad_form(const Eigen::LLT<Matrix>& llt) const {
    return llt.matrixL().solve(xi_).squaredNorm();
  }

  // log p(xi | kappa, zeta, rho) + log prior, up to constants
  double kz_log_post(double logdet, double quad, double kappa, double zeta) const {
    const double m = static_cast<double>(core_.data().cols());
    const double rho = core_.state().rho;
    const double w = std::log(zeta);
    double lp = -0.5 * m * logdet - quad / (2.0 * rho) -
                w * w / (2.0 * params_.sigma_zeta * params_.sigma_zeta);
    (void)kappa;  // flat U(0,2) prior
    return lp;
  }

  bool update_kappa_zeta() {
    Rng& rng = core_.master_rng();
    const double sd = std::sqrt(sigma2_kz_);
    const double u = std::log(params_.kappa / 2.0) - std::log1p(-params_.kappa / 2.0);
    const double w = std::log(params_.zeta);
    const double u_new = u + sd * rng.normal();
    const double w_new = w + sd * rng.normal();
    double kappa_new = 2.0 / (1.0 + std::exp(-u_new));
    kappa_new = std::clamp(kappa_new, 1e-6, 2.0 - 1e-6);
    const double zeta_new = std::exp(std::clamp(w_new, -20.0, 20.0));

    Matrix R_new = kernel_.correlation(kappa_new, zeta_new);
    Eigen::LLT<Matrix> llt_new;
    try {
      llt_new = llt_with_jitter(std::move(R_new), "matern proposal");
    } catch (const data_error&) {
      return false;
    }
    const double logdet_new = 2.0 * llt_new.matrixLLT().diagonal().array().log().sum();
    const double quad_new = quad_form(llt_new);
    const double quad_cur = quad_form(llt_R_);
    double log_ratio = kz_log_post(logdet_new, quad_new, kappa_new, zeta_new) -
                       kz_log_post(logdet_R_, quad_cur, params_.kappa, params_.zeta);
    // Jacobian of the logit(kappa/2) transform; log zeta needs none since the
    // prior is stated on the log scale.
    log_ratio += std::log(kappa_new * (2.0 - kappa_new)) -
                 std::log(params_.kappa * (2.0 - params_.kappa));
    if (log_ratio >= 0.0 || std::log(rng.uniform()) < log_ratio) {
      params_.kappa = kappa_new;
      params_.zeta = zeta_new;
      llt_R_ = std::move(llt_new);
      logdet_R_ = logdet_new;
      Rinv_ = llt_R_.solve(Matrix::Identity(n_, n_));
      return true;
    }
    return false;
  }

  bool update_rho() {
    ChainState& st = core_.state();
    const double nm = static_cast<double>(n_) * static_cast<double>(core_.data().cols());
    const double quad = quad_form(llt_R_);
    const double sse = (core_.residual_excluding_spatial() - xi_).squaredNorm();
    const auto [rho_new, accepted] = logit_metropolis_step(
        st.rho, st.sigma2_M,
        [&](double r) {
          return -0.5 * nm * std::log1p(-r) - 0.5 * nm * std::log(r) - quad / (2.0 * r) -
                 sse / (2.0 * (1.0 - r));
        },
        core_.master_rng());
    st.rho = rho_new;
    return accepted;
  }

  GibbsSampler core_;
  MaternKernel kernel_;
  Eigen::Index n_;
  MaternParams params_;
  Matrix xi_;
  Eigen::LLT<Matrix> llt_R_;
  double logdet_R_ = 0.0;
  Matrix Rinv_;
  double sigma2_kz_ = 0.25;
};

inline PosteriorSamples fit_matern_variant(const Matrix& Y, const Matrix& X, const Matrix& dist,
                                           const ModelConfig& cfg,
                                           std::vector<std::string> taxon_names = {},
                                           std::vector<std::string> covariate_names = {}) {
  MaternSampler sampler(Y, X, dist, cfg);
  PosteriorSamples out = sampler.run();
  out.taxon_names = std::move(taxon_names);
  out.covariate_names = std::move(covariate_names);
  return out;
}

}  // namespace snvs
