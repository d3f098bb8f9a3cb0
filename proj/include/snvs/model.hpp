#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "snvs/types.hpp"

namespace snvs {

enum class Variant { SNP, NS, MAT };

enum class SlabVariance { Common, PerCovariate };

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::SNP: return "snp";
    case Variant::NS: return "ns";
    case Variant::MAT: return "mat";
  }
  return "?";
}

struct ModelConfig {
  Variant variant = Variant::SNP;
  int iterations = 40000;
  int burn_in = 10000;
  int thin = 2;
  std::uint64_t seed = 1;

  double omega = 0.5;
  double theta = 0.0;    // <= 0 resolves to m^2 at fit time
  int cluster_cap = 0;   // <= 0 resolves to min(m, 500)
  SlabVariance slab = SlabVariance::Common;

  double a0 = 0.1, b0 = 0.1;          // intercept precision
  double a_mu0 = 0.1, b_mu0 = 0.1;    // grand-mean precision
  double a_d = 0.1, b_d = 0.1;        // DP precision
  double a_gamma = 0.1, b_gamma = 0.1;  // common slab precision
  double a_r = 1.0, b_r = 2.7;          // per-covariate slab precision

  int threads = 1;
  bool store_beta_draws = true;

  double resolved_theta(Eigen::Index m) const {
    return theta > 0.0 ? theta : static_cast<double>(m) * static_cast<double>(m);
  }
  int resolved_cluster_cap(Eigen::Index m) const {
    return cluster_cap > 0 ? cluster_cap : static_cast<int>(std::min<Eigen::Index>(m, 500));
  }

  void validate() const {
    if (iterations <= 0) throw data_error("config: iterations must be > 0");
    if (burn_in < 0 || burn_in >= iterations)
      throw data_error("config: need 0 <= burn_in < iterations");
    if (thin < 1) throw data_error("config: thin must be >= 1");
    if ((iterations - burn_in) % thin != 0)
      throw data_error("config: (iterations - burn_in) must be divisible by thin");
    if (omega < 0.0 || omega > 1.0) throw data_error("config: omega must lie in [0, 1]");
    if (theta > 0.0 && theta < 1.0) throw data_error("config: theta must be >= 1");
    if (threads < 1) throw data_error("config: threads must be >= 1");
  }
};

/// Full parameter state of one MCMC iteration.
struct ChainState {
  Matrix Z;           // n x m latent values, sign-matched to Y
  Vector beta0;       // m intercepts
  Matrix gamma;       // m x p slab magnitudes
  IntMatrix delta;    // m x p inclusion indicators
  Vector pi;          // p inclusion probabilities
  double tau0 = 1.0;
  Vector tau_slab;    // size 1 (common) or p (per-covariate)
  std::vector<int> g;  // m cluster labels in [0, K)
  Vector V;           // K stick variables, V(K-1) = 1
  Vector p_k;         // K stick weights
  double D = 1.0;
  Matrix mu;          // K x L cluster means
  Vector mu0;         // L grand mean
  double tau_mu0 = 1.0;
  double rho = 0.5;
  double sigma2_M = 1.0;  // Metropolis proposal variance for logit(rho)
  int accept_window = 0;  // acceptances in the current adaptation window
  int window_size = 0;
};

/// Columnar storage of retained draws.
struct PosteriorSamples {
  Variant variant = Variant::SNP;
  Eigen::Index n_taxa = 0;
  Eigen::Index n_cov = 0;
  std::vector<std::string> taxon_names;
  std::vector<std::string> covariate_names;

  IntMatrix M;      // draws x p, per-covariate inclusion counts
  Matrix beta;      // draws x (m*p), column j*p + r; empty if not stored
  IntMatrix g;      // draws x m cluster labels
  Vector rho;       // draws
  Vector D;         // draws
  std::vector<int> cluster_count;  // occupied clusters per draw

  double accept_rate = std::numeric_limits<double>::quiet_NaN();  // post burn-in, rho walk
  double accept_rate_aux = std::numeric_limits<double>::quiet_NaN();  // MAT: (kappa, zeta) walk
  double sigma2_M_final = std::numeric_limits<double>::quiet_NaN();

  Eigen::Index draws() const { return M.rows(); }
};

}  // namespace snvs
