#pragma once

#include <algorithm>
#include <iostream>
#include <set>
#include <vector>

#include "snvs/model.hpp"
#include "snvs/types.hpp"

namespace snvs {

struct PosteriorSummary {
  Vector null_prob;   // P(M_r = 0 | Y)
  Vector expected_M;  // E[M_r | Y]
  std::vector<int> pos_count;  // taxa with P(beta_jr > 0 | Y) > 0.975
  std::vector<int> neg_count;  // taxa with P(beta_jr < 0 | Y) > 0.975
  Matrix coclust;              // P(g_j = g_j' | Y)
  double mean_cluster_count = 0.0;
  double threshold = 0.05;
  std::vector<int> influential;  // null_prob < threshold
};

/// Empirical posterior functionals over the retained draws.
inline PosteriorSummary summarize(const PosteriorSamples& s, double t = 0.05) {
  const Eigen::Index draws = s.draws();
  if (draws == 0) throw data_error("summarize: empty sample set");
  const Eigen::Index p = s.n_cov;
  const Eigen::Index m = s.n_taxa;

  PosteriorSummary out;
  out.threshold = t;
  out.null_prob.resize(p);
  out.expected_M.resize(p);
  for (Eigen::Index r = 0; r < p; ++r) {
    long zeros = 0, total = 0;
    for (Eigen::Index d = 0; d < draws; ++d) {
      zeros += s.M(d, r) == 0 ? 1 : 0;
      total += s.M(d, r);
    }
    out.null_prob(r) = static_cast<double>(zeros) / static_cast<double>(draws);
    out.expected_M(r) = static_cast<double>(total) / static_cast<double>(draws);
  }

  out.pos_count.assign(static_cast<std::size_t>(p), 0);
  out.neg_count.assign(static_cast<std::size_t>(p), 0);
  if (s.beta.size() > 0) {
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index r = 0; r < p; ++r) {
        long pos = 0, neg = 0;
        for (Eigen::Index d = 0; d < draws; ++d) {
          const double b = s.beta(d, j * p + r);
          pos += b > 0.0 ? 1 : 0;
          neg += b < 0.0 ? 1 : 0;
        }
        if (static_cast<double>(pos) / draws > 0.975) ++out.pos_count[static_cast<std::size_t>(r)];
        if (static_cast<double>(neg) / draws > 0.975) ++out.neg_count[static_cast<std::size_t>(r)];
      }
  }

  out.coclust = Matrix::Zero(m, m);
  double cluster_total = 0.0;
  for (Eigen::Index d = 0; d < draws; ++d) {
    std::set<int> labels;
    for (Eigen::Index j = 0; j < m; ++j) labels.insert(s.g(d, j));
    cluster_total += static_cast<double>(labels.size());
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index j2 = j; j2 < m; ++j2)
        if (s.g(d, j) == s.g(d, j2)) {
          out.coclust(j, j2) += 1.0;
          if (j2 != j) out.coclust(j2, j) += 1.0;
        }
  }
  out.coclust /= static_cast<double>(draws);
  out.mean_cluster_count = cluster_total / static_cast<double>(draws);

  for (Eigen::Index r = 0; r < p; ++r)
    if (out.null_prob(r) < t) out.influential.push_back(static_cast<int>(r));
  return out;
}

/// k-medoids (PAM) partition of the dissimilarity 1 - coclust. The paper's
/// clustering step names k-means, which is ill-defined on a dissimilarity;
/// PAM is the standard analog and that substitution is noted in output
/// metadata by callers.
inline std::vector<int> extract_clusters(const Matrix& coclust, int k) {
  const Eigen::Index m = coclust.rows();
  if (k < 1 || k > m) throw data_error("extract_clusters: need 1 <= k <= m");
  const Matrix D = Matrix::Constant(m, m, 1.0) - coclust;

  {  // degenerate-k warning: fewer distinct rows than clusters
    std::vector<std::vector<double>> rows;
    for (Eigen::Index j = 0; j < m; ++j)
      rows.emplace_back(D.row(j).data(), D.row(j).data() + m);
    std::sort(rows.begin(), rows.end());
    const auto distinct = std::unique(rows.begin(), rows.end()) - rows.begin();
    if (distinct < k)
      std::cerr << "warning: extract_clusters: only " << distinct
                << " distinct dissimilarity rows for k=" << k << "; clusters may be degenerate\n";
  }

  // BUILD: greedy medoid seeding
  std::vector<Eigen::Index> medoids;
  std::vector<char> is_medoid(static_cast<std::size_t>(m), 0);
  Vector nearest = Vector::Constant(m, std::numeric_limits<double>::infinity());
  for (int c = 0; c < k; ++c) {
    Eigen::Index best = -1;
    double best_cost = std::numeric_limits<double>::infinity();
    for (Eigen::Index cand = 0; cand < m; ++cand) {
      if (is_medoid[static_cast<std::size_t>(cand)]) continue;
      double cost = 0.0;
      for (Eigen::Index j = 0; j < m; ++j) cost += std::min(nearest(j), D(j, cand));
      if (cost < best_cost) {
        best_cost = cost;
        best = cand;
      }
    }
    medoids.push_back(best);
    is_medoid[static_cast<std::size_t>(best)] = 1;
    for (Eigen::Index j = 0; j < m; ++j) nearest(j) = std::min(nearest(j), D(j, best));
  }

  auto total_cost = [&](const std::vector<Eigen::Index>& med) {
    double cost = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      double nb = std::numeric_limits<double>::infinity();
      for (Eigen::Index c : med) nb = std::min(nb, D(j, c));
      cost += nb;
    }
    return cost;
  };

  // SWAP until no single exchange improves the objective
  double cost = total_cost(medoids);
  bool improved = true;
  while (improved) {
    improved = false;
    for (std::size_t c = 0; c < medoids.size() && !improved; ++c) {
      for (Eigen::Index cand = 0; cand < m && !improved; ++cand) {
        if (is_medoid[static_cast<std::size_t>(cand)]) continue;
        std::vector<Eigen::Index> trial = medoids;
        trial[c] = cand;
        const double trial_cost = total_cost(trial);
        if (trial_cost < cost - 1e-12) {
          is_medoid[static_cast<std::size_t>(medoids[c])] = 0;
          is_medoid[static_cast<std::size_t>(cand)] = 1;
          medoids = std::move(trial);
          cost = trial_cost;
          improved = true;
        }
      }
    }
  }

  std::vector<int> assignment(static_cast<std::size_t>(m), 0);
  for (Eigen::Index j = 0; j < m; ++j) {
    double nb = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < medoids.size(); ++c)
      if (D(j, medoids[c]) < nb) {
        nb = D(j, medoids[c]);
        assignment[static_cast<std::size_t>(j)] = static_cast<int>(c);
      }
  }
  return assignment;
}

/// PAM objective (sum of dissimilarities to assigned medoids) for testing
/// against exhaustive medoid search.
inline double pam_objective(const Matrix& dissim, const std::vector<int>& assignment) {
  const Eigen::Index m = dissim.rows();
  const int k = *std::max_element(assignment.begin(), assignment.end()) + 1;
  double total = 0.0;
  for (int c = 0; c < k; ++c) {
    // medoid of each induced cluster: member minimizing within-cluster sum
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index cand = 0; cand < m; ++cand) {
      if (assignment[static_cast<std::size_t>(cand)] != c) continue;
      double cost = 0.0;
      for (Eigen::Index j = 0; j < m; ++j)
        if (assignment[static_cast<std::size_t>(j)] == c) cost += dissim(j, cand);
      best = std::min(best, cost);
    }
    if (std::isfinite(best)) total += best;
  }
  return total;
}

}  // namespace snvs
