// snvs: spatial nonparametric variable selection for binary taxon
// presence matrices. Subcommands: simulate, basis, fit, permanova, report.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "snvs/basis.hpp"
#include "snvs/csv.hpp"
#include "snvs/dataset_io.hpp"
#include "snvs/dissimilarity.hpp"
#include "snvs/distance.hpp"
#include "snvs/manifest.hpp"
#include "snvs/matern.hpp"
#include "snvs/mcmc.hpp"
#include "snvs/metrics.hpp"
#include "snvs/permanova.hpp"
#include "snvs/report.hpp"
#include "snvs/simulate.hpp"

namespace fs = std::filesystem;
using namespace snvs;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitMissingInput = 3;
constexpr int kExitValidation = 4;

struct DatasetFlags {
  std::string locations, presence, covariates;
  bool no_standardize = false;

  void attach(CLI::App* cmd, bool required = true) {
    auto* a = cmd->add_option("--locations", locations, "locations CSV (id,x,y or id,lon,lat)");
    auto* b = cmd->add_option("--presence", presence, "presence CSV (id,<taxa...>)");
    auto* c = cmd->add_option("--covariates", covariates, "covariates CSV (id,<names...>)");
    if (required) {
      a->required();
      b->required();
      c->required();
    }
    cmd->add_flag("--no-standardize", no_standardize, "keep covariates on their raw scale");
  }

  Dataset load() const {
    Dataset ds = load_dataset(locations, presence, covariates);
    if (!no_standardize) ds.covariates = standardize(ds.covariates);
    return ds;
  }
};

void write_vector_csv(const fs::path& path, const std::string& name, const Vector& v) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) rows.push_back({format_double(v(i))});
  write_csv(path.string(), {name}, rows);
}

void write_draws(const fs::path& dir, const PosteriorSamples& s) {
  fs::create_directories(dir);
  const Eigen::Index draws = s.draws();
  {
    std::vector<std::string> header;
    for (Eigen::Index r = 0; r < s.n_cov; ++r) header.push_back("M_" + std::to_string(r + 1));
    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index d = 0; d < draws; ++d) {
      std::vector<std::string> row;
      for (Eigen::Index r = 0; r < s.n_cov; ++r) row.push_back(std::to_string(s.M(d, r)));
      rows.push_back(std::move(row));
    }
    write_csv((dir / "M.csv").string(), header, rows);
  }
  write_vector_csv(dir / "rho.csv", "rho", s.rho);
  write_vector_csv(dir / "D.csv", "D", s.D);
  {
    std::vector<std::vector<std::string>> rows;
    for (int c : s.cluster_count) rows.push_back({std::to_string(c)});
    write_csv((dir / "nclust.csv").string(), {"clusters"}, rows);
  }
  {
    std::vector<std::string> header;
    for (Eigen::Index j = 0; j < s.n_taxa; ++j) header.push_back("g_" + std::to_string(j + 1));
    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index d = 0; d < draws; ++d) {
      std::vector<std::string> row;
      for (Eigen::Index j = 0; j < s.n_taxa; ++j) row.push_back(std::to_string(s.g(d, j)));
      rows.push_back(std::move(row));
    }
    write_csv((dir / "g.csv").string(), header, rows);
  }
  if (s.beta.size() > 0) {
    std::vector<std::string> header;
    for (Eigen::Index j = 0; j < s.n_taxa; ++j)
      for (Eigen::Index r = 0; r < s.n_cov; ++r)
        header.push_back("beta_" + std::to_string(j + 1) + "_" + std::to_string(r + 1));
    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index d = 0; d < draws; ++d) {
      std::vector<std::string> row;
      for (Eigen::Index c = 0; c < s.beta.cols(); ++c) row.push_back(format_double(s.beta(d, c)));
      rows.push_back(std::move(row));
    }
    write_csv((dir / "beta.csv").string(), header, rows);
  }
}

PosteriorSamples read_draws(const fs::path& dir) {
  PosteriorSamples s;
  const CsvTable M = read_csv((dir / "M.csv").string());
  const Eigen::Index draws = static_cast<Eigen::Index>(M.rows.size());
  s.n_cov = static_cast<Eigen::Index>(M.header.size());
  s.M.resize(draws, s.n_cov);
  for (Eigen::Index d = 0; d < draws; ++d)
    for (Eigen::Index r = 0; r < s.n_cov; ++r)
      s.M(d, r) = static_cast<int>(parse_double(
          M.rows[static_cast<std::size_t>(d)][static_cast<std::size_t>(r)], "M.csv"));

  const CsvTable g = read_csv((dir / "g.csv").string());
  s.n_taxa = static_cast<Eigen::Index>(g.header.size());
  s.g.resize(draws, s.n_taxa);
  for (Eigen::Index d = 0; d < draws; ++d)
    for (Eigen::Index j = 0; j < s.n_taxa; ++j)
      s.g(d, j) = static_cast<int>(parse_double(
          g.rows[static_cast<std::size_t>(d)][static_cast<std::size_t>(j)], "g.csv"));

  auto read_col = [&](const char* file) {
    const CsvTable t = read_csv((dir / file).string());
    Vector v(static_cast<Eigen::Index>(t.rows.size()));
    for (std::size_t i = 0; i < t.rows.size(); ++i) v(static_cast<Eigen::Index>(i)) =
        parse_double(t.rows[i][0], file);
    return v;
  };
  s.rho = read_col("rho.csv");
  s.D = read_col("D.csv");
  const Vector nc = read_col("nclust.csv");
  s.cluster_count.assign(nc.data(), nc.data() + nc.size());

  if (fs::exists(dir / "beta.csv")) {
    const CsvTable b = read_csv((dir / "beta.csv").string());
    s.beta.resize(draws, static_cast<Eigen::Index>(b.header.size()));
    for (Eigen::Index d = 0; d < draws; ++d)
      for (Eigen::Index c = 0; c < s.beta.cols(); ++c)
        s.beta(d, c) = parse_double(
            b.rows[static_cast<std::size_t>(d)][static_cast<std::size_t>(c)], "beta.csv");
  }
  // covariate names from the manifest, when present
  const fs::path manifest = dir.parent_path() / "run_manifest.json";
  if (fs::exists(manifest)) {
    std::ifstream in(manifest);
    json j;
    in >> j;
    if (j.contains("covariate_names"))
      s.covariate_names = j["covariate_names"].get<std::vector<std::string>>();
    if (j.contains("taxon_names"))
      s.taxon_names = j["taxon_names"].get<std::vector<std::string>>();
  }
  return s;
}

int cmd_simulate(const std::string& spatial, const std::string& taxa, int replicates,
                 int grid_side, int m, int p, std::uint64_t seed, const std::string& out,
                 const std::vector<std::string>& argv_echo) {
  WallTimer timer;
  SimConfig cfg;
  cfg.grid_side = grid_side;
  cfg.m = m;
  cfg.p = p;
  cfg.replicates = replicates;
  cfg.seed = seed;
  if (spatial == "ind")
    cfg.spatial = SpatialDep::Ind;
  else if (spatial == "exp")
    cfg.spatial = SpatialDep::Exp;
  else if (spatial == "nonstat")
    cfg.spatial = SpatialDep::Nonstat;
  else
    throw data_error("unknown --spatial '" + spatial + "'");
  cfg.taxa = taxa == "ar" ? TaxaDep::AR : TaxaDep::Ind;

  const fs::path root(out);
  fs::create_directories(root);
  for (int rep = 0; rep < replicates; ++rep) {
    const SimulatedDataset sim = generate_replicate(cfg, rep);
    char name[32];
    std::snprintf(name, sizeof(name), "rep_%03d", rep + 1);
    const fs::path dir = root / name;
    fs::create_directories(dir);
    save_dataset(sim.data, (dir / "locations.csv").string(), (dir / "presence.csv").string(),
                 (dir / "covariates.csv").string());
    // per-covariate truth
    std::vector<std::vector<std::string>> rows;
    for (int r = 0; r < cfg.p; ++r) {
      std::string prevalence = "0", magnitude = "0";
      if (sim.m_star[static_cast<std::size_t>(r)]) {
        const int pair = r / 2;
        prevalence = format_double(cfg.prevalences[static_cast<std::size_t>(pair)]);
        magnitude = format_double(r % 2 == 0 ? cfg.large_effect : cfg.small_effect);
      }
      rows.push_back({sim.data.covariates.names[static_cast<std::size_t>(r)],
                      std::to_string(sim.m_star[static_cast<std::size_t>(r)]), prevalence,
                      magnitude});
    }
    write_csv((dir / "truth.csv").string(), {"covariate", "m_star", "prevalence", "magnitude"},
              rows);
  }

  RunManifest man;
  man.subcommand = "simulate";
  man.args = argv_echo;
  man.seed = seed;
  man.extra["spatial"] = spatial;
  man.extra["taxa"] = taxa_dep_name(cfg.taxa);
  man.extra["replicates"] = replicates;
  man.extra["grid_side"] = grid_side;
  man.extra["m"] = m;
  man.extra["p"] = p;
  man.wall_time_sec = timer.seconds();
  man.write(root);
  return 0;
}

int cmd_basis(const DatasetFlags& data, double variance_target, double grid_lo, double grid_hi,
              int downsample, const std::string& out, const std::vector<std::string>& argv_echo) {
  WallTimer timer;
  const Dataset ds = data.load();
  BasisOptions opt;
  opt.variance_target = variance_target;
  opt.gcv_grid_lo = grid_lo;
  opt.gcv_grid_hi = grid_hi;
  opt.downsample_count = downsample;
  const BasisEstimate est =
      estimate_basis(ds.presence.values, ds.covariates.values, ds.locations, opt);

  const fs::path root(out);
  fs::create_directories(root);
  {
    std::vector<std::string> header = {"id"};
    for (Eigen::Index l = 0; l < est.basis.L(); ++l)
      header.push_back("psi_" + std::to_string(l + 1));
    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index i = 0; i < est.basis.psi.rows(); ++i) {
      std::vector<std::string> row = {ds.locations.points[static_cast<std::size_t>(i)].id};
      for (Eigen::Index l = 0; l < est.basis.L(); ++l)
        row.push_back(format_double(est.basis.psi(i, l)));
      rows.push_back(std::move(row));
    }
    write_csv((root / "basis.csv").string(), header, rows);
  }
  {
    json meta;
    meta["L"] = est.basis.L();
    meta["variance_explained"] = est.basis.variance_explained;
    meta["eigenvalues"] = std::vector<double>(
        est.basis.eigenvalues.data(), est.basis.eigenvalues.data() + est.basis.eigenvalues.size());
    meta["h_mean"] = est.covariance.h_mean;
    meta["h_cov"] = est.covariance.h_cov;
    meta["variance_target"] = variance_target;
    std::ofstream out_meta(root / "basis_meta.json");
    out_meta << meta.dump(2) << "\n";
  }

  RunManifest man;
  man.subcommand = "basis";
  man.args = argv_echo;
  man.seed = 0;
  man.add_input(data.locations);
  man.add_input(data.presence);
  man.add_input(data.covariates);
  man.extra["L"] = est.basis.L();
  man.extra["variance_explained"] = est.basis.variance_explained;
  man.wall_time_sec = timer.seconds();
  man.write(root);
  return 0;
}

Matrix load_basis_csv(const std::string& path, const Dataset& ds) {
  const CsvTable t = read_csv(path);
  if (t.header.size() < 2) throw data_error(path + ": expected id plus psi columns");
  const Eigen::Index n = static_cast<Eigen::Index>(t.rows.size());
  if (n != ds.n()) throw data_error(path + ": basis rows do not match the dataset");
  Matrix psi(n, static_cast<Eigen::Index>(t.header.size() - 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    if (t.rows[static_cast<std::size_t>(i)][0] != ds.locations.points[static_cast<std::size_t>(i)].id)
      throw data_error(path + ": basis row order does not match the locations file");
    for (Eigen::Index l = 0; l < psi.cols(); ++l)
      psi(i, l) = parse_double(t.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(l + 1)],
                               path);
  }
  return psi;
}

int cmd_fit(const DatasetFlags& data, const std::string& variant, int iterations, int burn_in,
            int thin, std::uint64_t seed, double omega, double theta, const std::string& slab,
            const std::string& basis_path, int threads, const std::string& out,
            const std::vector<std::string>& argv_echo) {
  WallTimer timer;
  const Dataset ds = data.load();

  ModelConfig cfg;
  cfg.iterations = iterations;
  cfg.burn_in = burn_in;
  cfg.thin = thin;
  cfg.seed = seed;
  cfg.omega = omega;
  cfg.theta = theta;
  cfg.threads = threads;
  cfg.slab = slab == "per-covariate" ? SlabVariance::PerCovariate : SlabVariance::Common;
  if (variant == "snp")
    cfg.variant = Variant::SNP;
  else if (variant == "ns")
    cfg.variant = Variant::NS;
  else if (variant == "mat")
    cfg.variant = Variant::MAT;
  else
    throw data_error("unknown --variant '" + variant + "'");

  PosteriorSamples samples;
  if (cfg.variant == Variant::SNP) {
    if (basis_path.empty()) throw data_error("--variant snp requires --basis");
    const Matrix psi = load_basis_csv(basis_path, ds);
    samples = run_chain(ds.presence.values, ds.covariates.values, psi, cfg,
                        ds.presence.taxon_names, ds.covariates.names);
  } else if (cfg.variant == Variant::NS) {
    samples = run_chain(ds.presence.values, ds.covariates.values, Matrix(), cfg,
                        ds.presence.taxon_names, ds.covariates.names);
  } else {
    const DistanceMetric metric =
        ds.locations.geographic ? DistanceMetric::GreatCircleMiles : DistanceMetric::Euclidean;
    const Matrix dist = pairwise_distances(ds.locations, metric).values;
    samples = fit_matern_variant(ds.presence.values, ds.covariates.values, dist, cfg,
                                 ds.presence.taxon_names, ds.covariates.names);
  }

  const fs::path root(out);
  fs::create_directories(root);
  write_draws(root / "draws", samples);

  RunManifest man;
  man.subcommand = "fit";
  man.args = argv_echo;
  man.seed = seed;
  man.add_input(data.locations);
  man.add_input(data.presence);
  man.add_input(data.covariates);
  if (!basis_path.empty()) man.add_input(basis_path);
  man.extra["variant"] = variant;
  man.extra["iterations"] = iterations;
  man.extra["burn_in"] = burn_in;
  man.extra["thin"] = thin;
  man.extra["omega"] = omega;
  man.extra["theta"] = cfg.resolved_theta(ds.m());
  man.extra["slab"] = slab;
  man.extra["draws"] = samples.draws();
  if (std::isfinite(samples.accept_rate)) man.extra["accept_rate_rho"] = samples.accept_rate;
  if (std::isfinite(samples.accept_rate_aux))
    man.extra["accept_rate_kappa_zeta"] = samples.accept_rate_aux;
  man.extra["covariate_names"] = ds.covariates.names;
  man.extra["taxon_names"] = ds.presence.taxon_names;
  man.wall_time_sec = timer.seconds();
  man.write(root);
  return 0;
}

int cmd_permanova(const DatasetFlags& data, int n_perm, std::uint64_t seed, int threads,
                  const std::string& out, const std::vector<std::string>& argv_echo) {
  WallTimer timer;
  const Dataset ds = data.load();
  const Matrix D = bray_curtis(ds.presence);
  const PermanovaResult res = permanova(D, ds.covariates, n_perm, seed, threads);

  const fs::path root(out);
  fs::create_directories(root);
  std::vector<std::vector<std::string>> rows;
  for (Eigen::Index r = 0; r < res.F.size(); ++r)
    rows.push_back({res.covariate_names[static_cast<std::size_t>(r)], format_double(res.F(r)),
                    format_double(res.p_values(r))});
  write_csv((root / "permanova.csv").string(), {"covariate", "pseudo_F", "p_value"}, rows);

  RunManifest man;
  man.subcommand = "permanova";
  man.args = argv_echo;
  man.seed = seed;
  man.add_input(data.locations);
  man.add_input(data.presence);
  man.add_input(data.covariates);
  man.extra["n_perm"] = n_perm;
  man.extra["dissimilarity"] = "bray-curtis";
  man.extra["ss_type"] = res.ss_type;
  man.wall_time_sec = timer.seconds();
  man.write(root);
  return 0;
}

int cmd_report_fit(const std::string& fit_dir, double threshold, const std::string& out,
                   const std::vector<std::string>& argv_echo) {
  WallTimer timer;
  const PosteriorSamples samples = read_draws(fs::path(fit_dir) / "draws");
  const PosteriorSummary sum = summarize(samples, threshold);

  const fs::path root(out);
  fs::create_directories(root);
  {
    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index r = 0; r < sum.null_prob.size(); ++r) {
      const std::string name =
          r < static_cast<Eigen::Index>(samples.covariate_names.size())
              ? samples.covariate_names[static_cast<std::size_t>(r)]
              : "X" + std::to_string(r + 1);
      rows.push_back({name, format_double(sum.null_prob(r)), format_double(sum.expected_M(r)),
                      std::to_string(sum.pos_count[static_cast<std::size_t>(r)]),
                      std::to_string(sum.neg_count[static_cast<std::size_t>(r)])});
    }
    write_csv((root / "table4.csv").string(),
              {"covariate", "null_prob", "expected_M", "n_positive", "n_negative"}, rows);
  }
  {
    std::vector<std::string> header;
    for (Eigen::Index j = 0; j < sum.coclust.rows(); ++j)
      header.push_back(j < static_cast<Eigen::Index>(samples.taxon_names.size())
                           ? samples.taxon_names[static_cast<std::size_t>(j)]
                           : "T" + std::to_string(j + 1));
    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index j = 0; j < sum.coclust.rows(); ++j) {
      std::vector<std::string> row;
      for (Eigen::Index j2 = 0; j2 < sum.coclust.cols(); ++j2)
        row.push_back(format_double(sum.coclust(j, j2)));
      rows.push_back(std::move(row));
    }
    write_csv((root / "coclust.csv").string(), header, rows);
  }
  {
    const int k = std::max(1, static_cast<int>(std::lround(sum.mean_cluster_count)));
    const std::vector<int> assignment = extract_clusters(sum.coclust, k);
    std::vector<std::vector<std::string>> rows;
    for (std::size_t j = 0; j < assignment.size(); ++j) {
      const std::string name = j < samples.taxon_names.size() ? samples.taxon_names[j]
                                                              : "T" + std::to_string(j + 1);
      rows.push_back({name, std::to_string(assignment[j])});
    }
    write_csv((root / "clusters.csv").string(), {"taxon", "cluster"}, rows);
  }

  RunManifest man;
  man.subcommand = "report";
  man.args = argv_echo;
  man.seed = 0;
  man.extra["threshold"] = threshold;
  man.extra["mean_cluster_count"] = sum.mean_cluster_count;
  man.extra["cluster_method"] = "pam";  // k-medoids stands in for k-means on a dissimilarity
  man.wall_time_sec = timer.seconds();
  man.write(root);
  return 0;
}

int cmd_report_scores(const std::string& scores_path, const std::string& truth_path,
                      double threshold, const std::string& out,
                      const std::vector<std::string>& argv_echo) {
  WallTimer timer;
  // scores.csv: method,replicate,covariate,score ; truth.csv as written by simulate
  const CsvTable scores = read_csv(scores_path);
  const CsvTable truth = read_csv(truth_path);

  std::map<std::string, int> cov_index;
  std::vector<int> m_star;
  std::vector<std::string> prevalence, magnitude;
  for (const auto& row : truth.rows) {
    cov_index[row[0]] = static_cast<int>(m_star.size());
    m_star.push_back(static_cast<int>(parse_double(row[1], truth_path)));
    prevalence.push_back(row[2]);
    magnitude.push_back(row[3]);
  }
  const int p = static_cast<int>(m_star.size());

  // scores[method][replicate] = per-covariate vector
  std::map<std::string, std::map<std::string, std::vector<double>>> table;
  for (const auto& row : scores.rows) {
    auto& vec = table[row[0]][row[1]];
    if (vec.empty()) vec.assign(static_cast<std::size_t>(p), 1.0);
    const auto it = cov_index.find(row[2]);
    if (it == cov_index.end())
      throw data_error(scores_path + ": unknown covariate '" + row[2] + "'");
    vec[static_cast<std::size_t>(it->second)] = parse_double(row[3], scores_path);
  }

  const fs::path root(out);
  fs::create_directories(root);
  std::vector<std::vector<std::string>> t1, t2, t3;
  for (const auto& [method, reps] : table) {
    double tpr = 0, fpr = 0, reg = 0;
    std::vector<std::vector<double>> per_cov(static_cast<std::size_t>(p));
    for (const auto& [rep, vec] : reps) {
      const Rates r = compute_metrics(vec, m_star, threshold);
      tpr += r.tpr;
      fpr += r.fpr;
      reg += registered_tpr(vec, m_star);
      for (int c = 0; c < p; ++c)
        per_cov[static_cast<std::size_t>(c)].push_back(vec[static_cast<std::size_t>(c)]);
    }
    const double n = static_cast<double>(reps.size());
    t1.push_back({method, format_double(tpr / n), format_double(fpr / n)});
    t2.push_back({method, format_double(reg / n), "0.05"});
    for (int c = 0; c < p; ++c) {
      if (!m_star[static_cast<std::size_t>(c)]) continue;
      t3.push_back({method, truth.rows[static_cast<std::size_t>(c)][0],
                    prevalence[static_cast<std::size_t>(c)], magnitude[static_cast<std::size_t>(c)],
                    format_double(inclusion_rate(per_cov[static_cast<std::size_t>(c)], threshold))});
    }
  }
  write_csv((root / "table1.csv").string(), {"method", "tpr", "fpr"}, t1);
  write_csv((root / "table2.csv").string(), {"method", "registered_tpr", "fpr_budget"}, t2);
  write_csv((root / "table3.csv").string(),
            {"method", "covariate", "prevalence", "magnitude", "inclusion_rate"}, t3);

  RunManifest man;
  man.subcommand = "report";
  man.args = argv_echo;
  man.seed = 0;
  man.add_input(scores_path);
  man.add_input(truth_path);
  man.extra["threshold"] = threshold;
  man.wall_time_sec = timer.seconds();
  man.write(root);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spatial nonparametric variable selection for binary taxon presence data"};
  app.require_subcommand(1);
  app.set_config("--config", "", "flat key=value config file");
  app.failure_message(CLI::FailureMessage::simple);

  std::vector<std::string> argv_echo(argv, argv + argc);

  std::uint64_t seed = 1;
  int threads = 1;
  std::string out = "out";
  app.add_option("--seed", seed, "master RNG seed")->capture_default_str();
  app.add_option("--threads", threads, "worker thread count")->capture_default_str();
  app.add_option("--out", out, "output directory")->capture_default_str();

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate replicate datasets");
  std::string spatial = "ind", taxa = "ind";
  int replicates = 1, grid_side = 15, m = 50, p = 20;
  sim->add_option("--spatial", spatial, "spatial dependence: ind, exp, nonstat")
      ->capture_default_str();
  sim->add_option("--taxa", taxa, "taxa dependence: ind, ar")->capture_default_str();
  sim->add_option("--replicates", replicates, "replicate count")->capture_default_str();
  sim->add_option("--grid-side", grid_side, "grid side length")->capture_default_str();
  sim->add_option("--taxa-count", m, "number of taxa")->capture_default_str();
  sim->add_option("--covariate-count", p, "number of covariates")->capture_default_str();

  // basis
  auto* basis = app.add_subcommand("basis", "estimate the spatial basis functions");
  DatasetFlags basis_data;
  basis_data.attach(basis);
  double variance_target = 0.90, grid_lo = 0.05, grid_hi = 2.0;
  int downsample = 200;
  basis->add_option("--variance-target", variance_target, "explained-variance target")
      ->capture_default_str();
  basis->add_option("--gcv-grid-lo", grid_lo, "lower grid factor of the median distance")
      ->capture_default_str();
  basis->add_option("--gcv-grid-hi", grid_hi, "upper grid factor of the median distance")
      ->capture_default_str();
  basis->add_option("--downsample", downsample, "location budget for bandwidth selection")
      ->capture_default_str();

  // fit
  auto* fit = app.add_subcommand("fit", "run the posterior sampler");
  DatasetFlags fit_data;
  fit_data.attach(fit);
  std::string variant = "snp", slab = "common", basis_path;
  int iterations = 40000, burn_in = 10000, thin = 2;
  double omega = 0.5, theta = 0.0;
  fit->add_option("--variant", variant, "snp, ns, or mat")->capture_default_str();
  fit->add_option("--iterations", iterations, "total MCMC iterations")->capture_default_str();
  fit->add_option("--burn-in", burn_in, "burn-in iterations")->capture_default_str();
  fit->add_option("--thin", thin, "thinning interval")->capture_default_str();
  fit->add_option("--omega", omega, "mixture weight of the sparse component")
      ->capture_default_str();
  fit->add_option("--theta", theta, "Beta(1, theta) sparsity (0 = m^2 default)")
      ->capture_default_str();
  fit->add_option("--slab", slab, "slab variance: common or per-covariate")
      ->capture_default_str();
  fit->add_option("--basis", basis_path, "basis CSV from the basis subcommand");

  // permanova
  auto* perm = app.add_subcommand("permanova", "distance-based permutation test");
  DatasetFlags perm_data;
  perm_data.attach(perm);
  std::string dissimilarity = "bray-curtis";
  int n_perm = 999;
  perm->add_option("--dissimilarity", dissimilarity, "dissimilarity (bray-curtis)")
      ->capture_default_str();
  perm->add_option("--n-perm", n_perm, "permutation count")->capture_default_str();

  // report
  auto* rep = app.add_subcommand("report", "summarize fits or aggregate simulation scores");
  std::string fit_dir, scores_path, truth_path;
  double threshold = 0.05;
  rep->add_option("--fit", fit_dir, "fit output directory to summarize");
  rep->add_option("--scores", scores_path, "scores CSV: method,replicate,covariate,score");
  rep->add_option("--truth", truth_path, "truth CSV from simulate");
  rep->add_option("--threshold", threshold, "null-probability threshold")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp") return 0;
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (sim->parsed())
      return cmd_simulate(spatial, taxa, replicates, grid_side, m, p, seed, out, argv_echo);
    if (basis->parsed())
      return cmd_basis(basis_data, variance_target, grid_lo, grid_hi, downsample, out, argv_echo);
    if (fit->parsed())
      return cmd_fit(fit_data, variant, iterations, burn_in, thin, seed, omega, theta, slab,
                     basis_path, threads, out, argv_echo);
    if (perm->parsed()) {
      if (dissimilarity != "bray-curtis")
        throw data_error("unsupported --dissimilarity '" + dissimilarity + "'");
      return cmd_permanova(perm_data, n_perm, seed, threads, out, argv_echo);
    }
    if (rep->parsed()) {
      if (!fit_dir.empty()) return cmd_report_fit(fit_dir, threshold, out, argv_echo);
      if (!scores_path.empty() && !truth_path.empty())
        return cmd_report_scores(scores_path, truth_path, threshold, out, argv_echo);
      throw data_error("report needs --fit or both --scores and --truth");
    }
  } catch (const io_error& e) {
    std::cerr << "error: missing-input: " << e.what() << "\n";
    return kExitMissingInput;
  } catch (const data_error& e) {
    std::cerr << "error: validation: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
