#pragma once

#include <algorithm>
#include <vector>

#include "snvs/types.hpp"

namespace snvs {

struct Rates {
  double tpr = 0.0;
  double fpr = 0.0;
};

/// Classification rates at threshold t: a covariate is flagged when its
/// score (posterior null probability or p-value) is strictly below t.
inline Rates compute_metrics(const std::vector<double>& scores, const std::vector<int>& m_star,
                             double t) {
  if (scores.size() != m_star.size())
    throw data_error("compute_metrics: scores and truth have different lengths");
  int p0 = 0, n_null = 0, tp = 0, fp = 0;
  for (std::size_t r = 0; r < scores.size(); ++r) {
    if (m_star[r]) {
      ++p0;
      if (scores[r] < t) ++tp;
    } else {
      ++n_null;
      if (scores[r] < t) ++fp;
    }
  }
  if (p0 == 0) throw data_error("compute_metrics: no truly influential covariates; TPR undefined");
  Rates out;
  out.tpr = static_cast<double>(tp) / p0;
  out.fpr = n_null > 0 ? static_cast<double>(fp) / n_null : 0.0;
  return out;
}

/// TPR at the largest threshold T whose FPR stays at or below 0.05. FPR is a
/// right-continuous step function of T jumping at the null scores, so T is
/// the (c+1)-th smallest null score for c = floor(0.05 * #nulls), used with
/// strict inequality.
inline double registered_tpr(const std::vector<double>& scores, const std::vector<int>& m_star,
                             double fpr_budget = 0.05) {
  if (scores.size() != m_star.size())
    throw data_error("registered_tpr: scores and truth have different lengths");
  std::vector<double> nulls;
  int p0 = 0;
  for (std::size_t r = 0; r < scores.size(); ++r) {
    if (m_star[r])
      ++p0;
    else
      nulls.push_back(scores[r]);
  }
  if (p0 == 0) throw data_error("registered_tpr: no truly influential covariates");
  double T = 1.0;
  if (!nulls.empty()) {
    std::sort(nulls.begin(), nulls.end());
    const auto c = static_cast<std::size_t>(fpr_budget * static_cast<double>(nulls.size()));
    if (c < nulls.size()) T = nulls[c];
  }
  const Rates at_T = compute_metrics(scores, m_star, T);
  if (at_T.fpr > fpr_budget + 1e-12)
    throw data_error("registered_tpr: realized FPR exceeds the budget (internal error)");
  return at_T.tpr;
}

/// Share of replicates whose score for one covariate falls below t.
inline double inclusion_rate(const std::vector<double>& replicate_scores, double t) {
  if (replicate_scores.empty()) throw data_error("inclusion_rate: no replicates");
  int hits = 0;
  for (double s : replicate_scores)
    if (s < t) ++hits;
  return static_cast<double>(hits) / static_cast<double>(replicate_scores.size());
}

}  // namespace snvs
