#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "snvs/basis.hpp"
#include "snvs/mcmc.hpp"
#include "snvs/rng.hpp"

using namespace snvs;

TEST_CASE("intercept posterior: printed formula and limits") {
  {
    const auto [mean, var] = intercept_posterior(0.8, 1, 0.0, 1.0);
    REQUIRE(mean == Catch::Approx(0.4).epsilon(1e-14));
    REQUIRE(var == Catch::Approx(0.5).epsilon(1e-14));
  }
  {
    const auto [mean, var] = intercept_posterior(5.0, 10, 0.0, 1e12);  // prior dominates
    REQUIRE(std::abs(mean) < 1e-10);
    REQUIRE(var < 1e-11);
  }
  {
    const auto [mean, var] = intercept_posterior(5.0, 10, 0.0, 1e-12);  // likelihood dominates
    REQUIRE(mean == Catch::Approx(0.5).epsilon(1e-10));
    REQUIRE(var == Catch::Approx(0.1).epsilon(1e-10));
  }
}

TEST_CASE("delta inclusion logit: hand case and coincident SSEs") {
  // n=1, rho=0, X_r=1, gamma=1, Z=1, pi=0.5: SSE_with=0, SSE_without=1
  const double logit_p = delta_inclusion_logit(0.5, 0.0, 0.0, 1.0);
  REQUIRE(logit_p == Catch::Approx(0.5).epsilon(1e-14));
  REQUIRE(1.0 / (1.0 + std::exp(-logit_p)) == Catch::Approx(0.6225).margin(5e-5));

  // gamma=0 makes the two SSEs coincide: pi* = pi exactly
  const double same = delta_inclusion_logit(0.3, 0.4, 2.0, 2.0);
  REQUIRE(1.0 / (1.0 + std::exp(-same)) == Catch::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("pi mixture weight: endpoints and long-double oracle") {
  REQUIRE(pi_mixture_weight(0.0, 100.0, 50, 3) == 0.0);
  REQUIRE(pi_mixture_weight(1.0, 100.0, 50, 3) == 1.0);

  const double omega = 0.5;
  const double theta = 2500.0;  // m^2 for m=50
  const int m = 50;
  for (int M : {0, 1, 10, 50}) {
    const double W = pi_mixture_weight(omega, theta, m, M);
    REQUIRE(W > 0.0);
    REQUIRE(W < 1.0);
    auto lbetal = [](long double a, long double b) {
      return lgammal(a) + lgammal(b) - lgammal(a + b);
    };
    const long double num =
        logl(omega) + logl(theta) + lbetal(1.0L + M, theta + m - M);
    const long double alt = logl(1.0 - omega) + lbetal(1.0L + M, 1.0L + m - M);
    const long double oracle = 1.0L / (1.0L + expl(alt - num));
    REQUIRE(W == Catch::Approx(static_cast<double>(oracle)).margin(1e-12));
  }
}

TEST_CASE("stick weights: telescoping identities") {
  Vector v1(1);
  v1 << 1.0;
  REQUIRE(stick_weights(v1)(0) == 1.0);

  Vector v3(3);
  v3 << 0.5, 0.5, 1.0;
  const Vector p = stick_weights(v3);
  REQUIRE(p(0) == Catch::Approx(0.5).epsilon(1e-15));
  REQUIRE(p(1) == Catch::Approx(0.25).epsilon(1e-15));
  REQUIRE(p(2) == Catch::Approx(0.25).epsilon(1e-15));

  Rng rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    Vector v(20);
    for (int i = 0; i < 19; ++i) v(i) = rng.uniform();
    v(19) = 1.0;
    REQUIRE(stick_weights(v).sum() == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("DP precision posterior parameters") {
  Vector v(2);
  v << 0.5, 1.0;
  const auto [shape, rate] = dp_posterior(v, 0.1, 0.1);
  REQUIRE(shape == Catch::Approx(1.1).epsilon(1e-14));
  REQUIRE(rate == Catch::Approx(0.1 + std::log(2.0)).epsilon(1e-12));

  Vector tiny(3);
  tiny << 1e-14, 1e-14, 1.0;
  const auto [s2, r2] = dp_posterior(tiny, 0.1, 0.1);
  REQUIRE(s2 == Catch::Approx(2.1));
  REQUIRE(r2 == Catch::Approx(0.1).margin(1e-10));
}

TEST_CASE("global mean posterior") {
  Matrix mu1(1, 2);
  mu1 << 0.4, -0.6;
  const auto [mean1, var1] = global_mean_posterior(mu1, 0.5, 2.0);
  REQUIRE(mean1(0) == Catch::Approx(0.4 / 2.0).epsilon(1e-14));  // mu_1 / (1 + rho tau)
  REQUIRE(var1 == Catch::Approx(0.5 / 2.0).epsilon(1e-14));

  Matrix muc = Matrix::Constant(5, 3, 0.7);
  const auto [meanc, varc] = global_mean_posterior(muc, 0.3, 4.0);
  REQUIRE(meanc(2) == Catch::Approx(5.0 * 0.7 / (5.0 + 0.3 * 4.0)).epsilon(1e-14));
  REQUIRE(varc == Catch::Approx(0.3 / 6.2).epsilon(1e-14));
}

TEST_CASE("gamma posterior natural parameters") {
  const int n = 8, p = 2;
  Rng rng(31);
  Matrix X(n, p);
  for (int i = 0; i < n; ++i)
    for (int r = 0; r < p; ++r) X(i, r) = rng.normal();
  // force X'X = n I for the closed-form check
  Eigen::HouseholderQR<Matrix> qr(X);
  X = Matrix(qr.householderQ()).leftCols(p) * std::sqrt(static_cast<double>(n));
  const Matrix XtX = X.transpose() * X;
  Vector resid(n);
  for (int i = 0; i < n; ++i) resid(i) = rng.normal();
  const Vector xtr = X.transpose() * resid;

  Eigen::VectorXi all_in = Eigen::VectorXi::Ones(p);
  Vector tau = Vector::Ones(1);  // common slab precision 1
  const auto nat = gamma_posterior(XtX, xtr, all_in, tau, 0.0);
  const Vector mean = nat.precision.ldlt().solve(nat.shift);
  for (int r = 0; r < p; ++r)
    REQUIRE(mean(r) == Catch::Approx(xtr(r) / (n + 1.0)).epsilon(1e-10));

  // excluded coordinates revert to the prior
  Eigen::VectorXi none = Eigen::VectorXi::Zero(p);
  Vector tau2 = Vector::Constant(1, 4.0);
  const auto prior = gamma_posterior(XtX, xtr, none, tau2, 0.3);
  REQUIRE(prior.shift.cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(prior.precision(0, 0) == 4.0);
  REQUIRE(prior.precision(0, 1) == 0.0);

  // flat-prior limit: posterior mean approaches OLS
  Vector tau3 = Vector::Constant(1, 1e-12);
  const auto flat = gamma_posterior(XtX, xtr, all_in, tau3, 0.0);
  const Vector ols = XtX.ldlt().solve(xtr);
  const Vector flat_mean = flat.precision.ldlt().solve(flat.shift);
  REQUIRE((flat_mean - ols).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("cluster mean posterior: scalar algebra and likelihood-dominance limit") {
  const int n = 9;
  Matrix Psi = Matrix::Constant(n, 1, 1.0 / 3.0);  // unit column: Psi'Psi = 1
  const Matrix PsiTPsi = Psi.transpose() * Psi;
  Vector resid_sum(n);
  for (int i = 0; i < n; ++i) resid_sum(i) = 0.5 * (i - 4);
  const Vector pt = Psi.transpose() * resid_sum;
  Vector mu0 = Vector::Constant(1, -0.2);

  const double rho = 0.4;
  const int n_k = 3;
  const auto nat = cluster_mean_posterior(PsiTPsi, pt, n_k, rho, mu0);
  const double prec = n_k / (1.0 - rho) * PsiTPsi(0, 0) + 1.0 / rho;
  const double shift = mu0(0) / rho + pt(0) / (1.0 - rho);
  REQUIRE(nat.precision(0, 0) == Catch::Approx(prec).epsilon(1e-14));
  const Vector mean = nat.precision.ldlt().solve(nat.shift);
  REQUIRE(mean(0) == Catch::Approx(shift / prec).epsilon(1e-14));

  // rho -> 1 with Psi'Psi = I: the posterior mean approaches Psi' resid
  Matrix I1 = Matrix::Identity(2, 2);
  Vector proj(2);
  proj << 0.3, -0.8;
  const auto lim = cluster_mean_posterior(I1, proj, 1, 0.999999, Vector::Zero(2));
  const Vector lim_mean = lim.precision.ldlt().solve(lim.shift);
  REQUIRE((lim_mean - proj).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("label scores: likelihood cancellation and hand normal densities") {
  // two identical cluster means: posterior label probabilities proportional to p_k
  Matrix mu = Matrix::Constant(2, 1, 0.7);
  Vector log_p(2);
  log_p << std::log(0.3), std::log(0.7);
  Matrix PsiTPsi = Matrix::Identity(1, 1);
  Vector pt = Vector::Constant(1, 1.3);
  const Vector s = label_scores(mu, log_p, PsiTPsi, pt, 0.5);
  const double w0 = std::exp(s(0) - s.maxCoeff());
  const double w1 = std::exp(s(1) - s.maxCoeff());
  REQUIRE(w0 / (w0 + w1) == Catch::Approx(0.3).epsilon(1e-12));

  // K=2, n=1, Psi=1: compare against hand-evaluated normal densities
  Matrix mu2(2, 1);
  mu2 << 0.5, -1.0;
  const double z = 0.8, rho = 0.25;
  Vector pt2 = Vector::Constant(1, z);  // Psi' r0 with Psi = 1, r0 = z
  Vector logp2(2);
  logp2 << std::log(0.4), std::log(0.6);
  const Vector s2 = label_scores(mu2, logp2, Matrix::Identity(1, 1), pt2, rho);
  auto dens = [&](double mean) {
    return norm_pdf((z - mean) / std::sqrt(1.0 - rho)) / std::sqrt(1.0 - rho);
  };
  const double hand0 = 0.4 * dens(0.5);
  const double hand1 = 0.6 * dens(-1.0);
  const double p_hand = hand0 / (hand0 + hand1);
  const double e0 = std::exp(s2(0) - s2.maxCoeff());
  const double e1 = std::exp(s2(1) - s2.maxCoeff());
  REQUIRE(e0 / (e0 + e1) == Catch::Approx(p_hand).epsilon(1e-12));
}

TEST_CASE("logit metropolis: zero-variance proposal always accepts") {
  Rng rng(1);
  const auto [x, accepted] =
      logit_metropolis_step(0.37, 0.0, [](double) { return 0.0; }, rng);
  REQUIRE(accepted);
  REQUIRE(x == Catch::Approx(0.37).epsilon(1e-12));
}

TEST_CASE("logit metropolis with Jacobian samples a uniform target") {
  Rng rng(5);
  double x = 0.5;
  std::vector<double> draws;
  for (int i = 0; i < 20000; ++i) {
    x = logit_metropolis_step(x, 4.0, [](double) { return 0.0; }, rng).first;
    if (i % 2 == 1) draws.push_back(x);
  }
  std::sort(draws.begin(), draws.end());
  double ks = 0.0;
  for (std::size_t i = 0; i < draws.size(); ++i) {
    const double f = static_cast<double>(i + 1) / static_cast<double>(draws.size());
    ks = std::max(ks, std::abs(f - draws[i]));
  }
  REQUIRE(ks < 0.03);
  const double mean = std::accumulate(draws.begin(), draws.end(), 0.0) / draws.size();
  REQUIRE(mean == Catch::Approx(0.5).margin(0.02));
}

TEST_CASE("rho log posterior drives the chain toward high rho when data dominate") {
  const double nm = 5000, LK = 4, ss_mu = 0.1, sse = 10.0;
  REQUIRE(rho_log_posterior(0.9, nm, LK, ss_mu, sse) >
          rho_log_posterior(0.5, nm, LK, ss_mu, sse));
  REQUIRE(rho_log_posterior(0.5, nm, LK, ss_mu, sse) >
          rho_log_posterior(0.2, nm, LK, ss_mu, sse));

  Rng rng(9);
  double rho = 0.3;
  double acc = 0.0;
  const int steps = 4000;
  for (int i = 0; i < steps; ++i) {
    rho = logit_metropolis_step(
              rho, 1.0, [&](double r) { return rho_log_posterior(r, nm, LK, ss_mu, sse); }, rng)
              .first;
    if (i >= steps / 2) acc += rho;
  }
  REQUIRE(acc / (steps / 2) > 0.8);
}

TEST_CASE("prior null probability: analytic identities") {
  Rng rng(21);
  // omega=1, theta=1: P(M_r=0) = 1/(m+1)
  REQUIRE(prior_null_prob(1.0, 1.0, 20, 200000, rng) ==
          Catch::Approx(1.0 / 21.0).margin(0.004));
  // omega=1, theta=m: exactly 1/2
  REQUIRE(prior_null_prob(1.0, 50.0, 50, 200000, rng) == Catch::Approx(0.5).margin(0.005));
  // the paper's default omega=0.5, theta=m^2 also gives 1/2
  REQUIRE(prior_null_prob(0.5, 763.0 * 763.0, 763, 200000, rng) ==
          Catch::Approx(0.5).margin(0.01));
}

TEST_CASE("co-clustering phi") {
  Vector p1(3);
  p1 << 1, 0, 0;
  REQUIRE(coclustering_phi(p1) == 1.0);
  REQUIRE(coclustering_phi(Vector::Constant(8, 0.125)) == Catch::Approx(0.125).epsilon(1e-14));
  Vector p3(3);
  p3 << 0.5, 0.25, 0.25;
  REQUIRE(coclustering_phi(p3) == Catch::Approx(0.375).epsilon(1e-14));
}

TEST_CASE("expected cluster count approximation") {
  REQUIRE(expected_cluster_count(50, 1.0) == Catch::Approx(std::log(51.0)).epsilon(1e-12));
  REQUIRE(expected_cluster_count(1000, 77.0) == Catch::Approx(203.1).margin(0.2));

  // stick-breaking simulation oracle at a small scale
  Rng rng(41);
  const int K = 200, m = 200, reps = 200;
  const double D = 5.0;
  double total = 0.0;
  for (int rep = 0; rep < reps; ++rep) {
    Vector V(K);
    for (int u = 0; u < K - 1; ++u) V(u) = rng.beta(1.0, D);
    V(K - 1) = 1.0;
    const Vector p = stick_weights(V);
    std::vector<double> w(p.data(), p.data() + K);
    std::set<std::size_t> seen;
    for (int j = 0; j < m; ++j) seen.insert(rng.categorical(w));
    total += static_cast<double>(seen.size());
  }
  const double mc = total / reps;
  REQUIRE(mc == Catch::Approx(expected_cluster_count(m, D)).epsilon(0.12));
}

namespace {

Matrix random_basis(Eigen::Index n, Eigen::Index L, std::uint64_t seed) {
  Rng rng(seed);
  PreBasis pre;
  pre.columns.resize(n, L);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index l = 0; l < L; ++l) pre.columns(i, l) = rng.normal();
  pre.eigenvalues = Vector::Ones(L);
  return scale_and_rotate(pre).psi;
}

struct SmallProblem {
  Matrix Y, X, Psi;
  ModelConfig cfg;
};

SmallProblem small_problem(std::uint64_t seed, int n = 20, int m = 5, int p = 2, int L = 2,
                           int K = 3) {
  Rng rng(seed);
  SmallProblem sp;
  sp.Y.resize(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) sp.Y(i, j) = rng.uniform() < 0.5 ? 1.0 : 0.0;
  sp.X.resize(n, p);
  for (int i = 0; i < n; ++i)
    for (int r = 0; r < p; ++r) sp.X(i, r) = rng.normal();
  CovariateMatrix cm;
  cm.values = sp.X;
  cm.names.assign(static_cast<std::size_t>(p), "x");
  sp.X = standardize(cm).values;
  sp.Psi = random_basis(n, L, seed + 1);
  sp.cfg.variant = Variant::SNP;
  sp.cfg.cluster_cap = K;
  sp.cfg.iterations = 60;
  sp.cfg.burn_in = 20;
  sp.cfg.thin = 1;
  sp.cfg.seed = seed;
  return sp;
}

}  // namespace

TEST_CASE("latent update respects the sign constraints and half-normal mean") {
  SmallProblem sp = small_problem(3);
  GibbsSampler sampler(sp.Y, sp.X, sp.Psi, sp.cfg);
  for (int sweep = 0; sweep < 50; ++sweep) {
    sampler.sweep();
    const auto& st = sampler.state();
    for (Eigen::Index i = 0; i < sp.Y.rows(); ++i)
      for (Eigen::Index j = 0; j < sp.Y.cols(); ++j) {
        if (sp.Y(i, j) > 0.5)
          REQUIRE(st.Z(i, j) > 0.0);
        else
          REQUIRE(st.Z(i, j) <= 0.0);
      }
    REQUIRE(st.p_k.sum() == Catch::Approx(1.0).margin(1e-12));
  }

  // rho ~ 0, all means zero: Y=0 cells behave like a negative half-normal
  GibbsSampler hn(sp.Y, sp.X, sp.Psi, sp.cfg);
  auto& st = hn.state();
  st.rho = 1e-9;
  st.beta0.setZero();
  st.gamma.setZero();
  st.delta.setZero();
  st.mu.setZero();
  st.mu0.setZero();
  hn.refresh_B();
  hn.refresh_spatial_effects();
  double sum = 0.0;
  long count = 0;
  for (int it = 0; it < 400; ++it) {
    hn.update_latent();
    for (Eigen::Index i = 0; i < sp.Y.rows(); ++i)
      for (Eigen::Index j = 0; j < sp.Y.cols(); ++j)
        if (sp.Y(i, j) < 0.5) {
          sum += st.Z(i, j);
          ++count;
        }
  }
  REQUIRE(sum / count == Catch::Approx(-std::sqrt(2.0 / M_PI)).margin(0.01));
}

TEST_CASE("precision updates match the printed Gamma laws") {
  SmallProblem sp = small_problem(7, 16, 2, 2, 2, 2);
  GibbsSampler sampler(sp.Y, sp.X, sp.Psi, sp.cfg);
  auto& st = sampler.state();
  st.beta0 << 1.0, 1.0;  // rate = b0 + 1, shape = a0 + 1
  st.gamma.setZero();
  st.mu0.setZero();
  double tau0_sum = 0.0, tau_sum = 0.0;
  const int reps = 40000;
  for (int i = 0; i < reps; ++i) {
    sampler.update_precisions();
    tau0_sum += st.tau0;
    tau_sum += st.tau_slab(0);
    st.beta0 << 1.0, 1.0;
    st.gamma.setZero();
    st.mu0.setZero();
  }
  const double e_tau0 = (0.1 + 1.0) / (0.1 + 1.0);  // shape a0 + m/2 over rate b0 + 1/2 sum
  REQUIRE(tau0_sum / reps == Catch::Approx(e_tau0).margin(0.03));
  // all gamma zero: common slab tau ~ Gamma(a + mp/2, b) with m=2, p=2
  REQUIRE(tau_sum / reps == Catch::Approx((0.1 + 2.0) / 0.1).margin(0.7));
}

TEST_CASE("gamma update: excluded coordinates draw from the prior") {
  SmallProblem sp = small_problem(11, 30, 3, 2, 2, 2);
  GibbsSampler sampler(sp.Y, sp.X, sp.Psi, sp.cfg);
  auto& st = sampler.state();
  double sum = 0.0, sum2 = 0.0;
  const int reps = 20000;
  for (int i = 0; i < reps; ++i) {
    st.delta.setZero();
    st.tau_slab(0) = 4.0;
    st.pi.setConstant(1e-12);  // keep delta at zero inside the update
    sampler.update_gamma_delta();
    sum += st.gamma(0, 0);
    sum2 += st.gamma(0, 0) * st.gamma(0, 0);
  }
  REQUIRE(sum / reps == Catch::Approx(0.0).margin(0.02));
  REQUIRE(sum2 / reps == Catch::Approx(0.25).margin(0.01));  // variance 1/tau
}

TEST_CASE("delta update endpoints: pi at 0 and 1 force the indicator") {
  SmallProblem sp = small_problem(13, 10, 2, 2, 2, 2);
  GibbsSampler sampler(sp.Y, sp.X, sp.Psi, sp.cfg);
  auto& st = sampler.state();
  st.pi.setConstant(0.0);
  sampler.update_gamma_delta();
  REQUIRE(st.delta.cwiseAbs().maxCoeff() == 0);
  st.pi.setConstant(1.0);
  sampler.update_gamma_delta();
  REQUIRE(st.delta.minCoeff() == 1);
}

TEST_CASE("cluster label update: K=1 trivially assigns everyone") {
  SmallProblem sp = small_problem(17, 12, 4, 2, 2, 1);
  GibbsSampler sampler(sp.Y, sp.X, sp.Psi, sp.cfg);
  sampler.sweep();
  for (int label : sampler.state().g) REQUIRE(label == 0);
}

TEST_CASE("empty clusters redraw their means from the prior") {
  SmallProblem sp = small_problem(19, 12, 2, 2, 2, 3);
  GibbsSampler sampler(sp.Y, sp.X, sp.Psi, sp.cfg);
  auto& st = sampler.state();
  const double rho = 0.64;
  double sum = 0.0, sum2 = 0.0;
  const int reps = 20000;
  for (int i = 0; i < reps; ++i) {
    st.g = {0, 0};  // cluster 2 stays empty
    st.rho = rho;
    st.mu0.setConstant(0.3);
    sampler.refresh_residuals();
    sampler.update_cluster_means();
    sum += st.mu(2, 0);
    sum2 += (st.mu(2, 0) - 0.3) * (st.mu(2, 0) - 0.3);
  }
  REQUIRE(sum / reps == Catch::Approx(0.3).margin(0.02));
  REQUIRE(sum2 / reps == Catch::Approx(rho).margin(0.02));
}

TEST_CASE("run_chain bookkeeping and determinism") {
  SmallProblem sp = small_problem(23);
  sp.cfg.iterations = sp.cfg.burn_in + 2;
  sp.cfg.thin = 1;
  const PosteriorSamples out = run_chain(sp.Y, sp.X, sp.Psi, sp.cfg);
  REQUIRE(out.draws() == 2);

  sp.cfg.iterations = 120;
  sp.cfg.burn_in = 40;
  sp.cfg.thin = 2;
  const PosteriorSamples a = run_chain(sp.Y, sp.X, sp.Psi, sp.cfg);
  const PosteriorSamples b = run_chain(sp.Y, sp.X, sp.Psi, sp.cfg);
  REQUIRE(a.draws() == 40);
  REQUIRE(a.M == b.M);
  REQUIRE(a.rho == b.rho);
  REQUIRE(a.D == b.D);
  REQUIRE(a.g == b.g);
  REQUIRE(a.beta == b.beta);

  ModelConfig threaded = sp.cfg;
  threaded.threads = 2;
  const PosteriorSamples c = run_chain(sp.Y, sp.X, sp.Psi, threaded);
  REQUIRE(a.M == c.M);
  REQUIRE(a.rho == c.rho);
  REQUIRE(a.beta == c.beta);
}

TEST_CASE("config validation") {
  ModelConfig cfg;
  cfg.iterations = 100;
  cfg.burn_in = 100;
  REQUIRE_THROWS_AS(cfg.validate(), data_error);
  cfg.burn_in = 50;
  cfg.thin = 3;  // 50 not divisible by 3
  REQUIRE_THROWS_AS(cfg.validate(), data_error);
  cfg.thin = 2;
  REQUIRE_NOTHROW(cfg.validate());
  cfg.omega = 1.5;
  REQUIRE_THROWS_AS(cfg.validate(), data_error);
}

TEST_CASE("NS chain recovers a strong covariate and leaves noise out") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
    Rng rng(seed * 100 + 9);
    const int n = 200, m = 10, p = 3;
    Matrix X(n, p), Y(n, m);
    // The global test is built to flag covariates that help even a few taxa,
    // so a draw where a "noise" column picks up a chance 3-sigma effect is
    // signal, not noise. Condition on realized datasets whose noise columns
    // are actually quiet.
    while (true) {
      for (int i = 0; i < n; ++i)
        for (int r = 0; r < p; ++r) X(i, r) = rng.normal();
      CovariateMatrix cm;
      cm.values = X;
      cm.names = {"a", "b", "c"};
      X = standardize(cm).values;
      for (int j = 0; j < m; ++j)
        for (int i = 0; i < n; ++i) Y(i, j) = (2.0 * X(i, 0) + rng.normal()) > 0 ? 1.0 : 0.0;
      double worst = 0.0;
      for (int j = 0; j < m; ++j) {
        const ProbitFit fit = fit_probit(Y.col(j), X);
        for (int r = 2; r <= p; ++r)
          worst = std::max(worst, std::abs(fit.coef(r) / fit.se(r)));
      }
      if (worst < 2.5) break;
    }

    ModelConfig cfg;
    cfg.variant = Variant::NS;
    cfg.iterations = 1500;
    cfg.burn_in = 500;
    cfg.thin = 1;
    cfg.seed = seed;
    const PosteriorSamples out = run_chain(Y, X, Matrix(), cfg);
    Vector null_prob = Vector::Zero(p);
    for (Eigen::Index d = 0; d < out.draws(); ++d)
      for (int r = 0; r < p; ++r) null_prob(r) += out.M(d, r) == 0 ? 1.0 : 0.0;
    null_prob /= static_cast<double>(out.draws());
    REQUIRE(null_prob(0) < 0.05);
    REQUIRE(null_prob(1) > 0.5);
    REQUIRE(null_prob(2) > 0.5);
  }
}

TEST_CASE("conditional cross-covariance matches rho sum psi psi' for shared labels") {
  const Eigen::Index n = 6, L = 2;
  const Matrix Psi = random_basis(n, L, 77);
  const double rho = 0.6;
  Rng rng(123);
  const Eigen::Index s = 0, s2 = 3;
  const long N = 400000;
  double sum = 0.0, sum2 = 0.0;
  for (long it = 0; it < N; ++it) {
    Vector mu(L);
    for (Eigen::Index l = 0; l < L; ++l) mu(l) = std::sqrt(rho) * rng.normal();
    const double zj = Psi.row(s).dot(mu) + std::sqrt(1 - rho) * rng.normal();
    const double zj2 = Psi.row(s2).dot(mu) + std::sqrt(1 - rho) * rng.normal();
    sum += zj * zj2;
    sum2 += zj * zj2 * zj * zj2;
  }
  const double mc = sum / N;
  const double se = std::sqrt((sum2 / N - mc * mc) / N);
  const double expected = rho * Psi.row(s).dot(Psi.row(s2));
  REQUIRE(std::abs(mc - expected) < 5.0 * se);
}

TEST_CASE("marginal cross-covariance carries one factor of rho phi, not two") {
  // Appendix-A open question: Monte Carlo the label-marginal covariance and
  // record which form holds. The product-rule derivation gives
  // P(g_j = g_j') rho sum_l psi_l(s) psi_l(s'); the printed factor 2 is not
  // reproduced.
  const Eigen::Index n = 6, L = 2;
  const Matrix Psi = random_basis(n, L, 99);
  const double rho = 0.6;
  Vector p(3);
  p << 0.5, 0.3, 0.2;
  const double phi = coclustering_phi(p);
  // choose the location pair with the largest basis inner product
  Eigen::Index s = 0, s2 = 1;
  double best = -1.0;
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = a + 1; b < n; ++b)
      if (std::abs(Psi.row(a).dot(Psi.row(b))) > best) {
        best = std::abs(Psi.row(a).dot(Psi.row(b)));
        s = a;
        s2 = b;
      }
  Rng rng(321);
  std::vector<double> w(p.data(), p.data() + 3);
  const long N = 600000;
  double sum = 0.0, sum2 = 0.0;
  for (long it = 0; it < N; ++it) {
    Matrix mu(3, L);
    for (int k = 0; k < 3; ++k)
      for (Eigen::Index l = 0; l < L; ++l) mu(k, l) = std::sqrt(rho) * rng.normal();
    const auto gj = rng.categorical(w);
    const auto gj2 = rng.categorical(w);
    const double zj = Psi.row(s).dot(mu.row(gj)) + std::sqrt(1 - rho) * rng.normal();
    const double zj2 = Psi.row(s2).dot(mu.row(gj2)) + std::sqrt(1 - rho) * rng.normal();
    sum += zj * zj2;
    sum2 += zj * zj2 * zj * zj2;
  }
  const double mc = sum / N;
  const double se = std::sqrt((sum2 / N - mc * mc) / N);
  const double one_factor = rho * phi * Psi.row(s).dot(Psi.row(s2));
  const double two_factor = 2.0 * one_factor;
  REQUIRE(std::abs(mc - one_factor) < 5.0 * se);
  REQUIRE(std::abs(mc - two_factor) > 5.0 * se);
}

TEST_CASE("prior state draw produces sign-consistent data") {
  SmallProblem sp = small_problem(29);
  GibbsSampler sampler(sp.Y, sp.X, sp.Psi, sp.cfg);
  sampler.draw_state_from_prior();
  const auto& st = sampler.state();
  const Matrix& Y = sampler.data();
  for (Eigen::Index i = 0; i < Y.rows(); ++i)
    for (Eigen::Index j = 0; j < Y.cols(); ++j)
      REQUIRE((Y(i, j) > 0.5) == (st.Z(i, j) > 0.0));
  REQUIRE(st.p_k.sum() == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(st.rho > 0.0);
  REQUIRE(st.rho < 1.0);
}
