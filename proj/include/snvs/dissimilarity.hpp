#pragma once

#include <iostream>

#include "snvs/types.hpp"

namespace snvs {

/// Bray-Curtis dissimilarity between rows of a presence matrix:
///   D(i, i') = 1 - 2 * sum_j min(Y_ij, Y_i'j) / (sum_j Y_ij + sum_j Y_i'j).
/// A pair of all-zero rows gets dissimilarity 0 with a warning on stderr.
inline Matrix bray_curtis(const PresenceMatrix& Y) {
  const Eigen::Index n = Y.n();
  Matrix D = Matrix::Zero(n, n);
  const Vector row_sums = Y.values.rowwise().sum();
  bool warned = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double denom = row_sums(i) + row_sums(j);
      double d = 0.0;
      if (denom > 0.0) {
        const double shared = Y.values.row(i).cwiseMin(Y.values.row(j)).sum();
        d = 1.0 - 2.0 * shared / denom;
      } else if (!warned) {
        std::cerr << "warning: bray_curtis: rows " << i + 1 << " and " << j + 1
                  << " are both empty; dissimilarity set to 0\n";
        warned = true;
      }
      D(i, j) = d;
      D(j, i) = d;
    }
  }
  return D;
}

}  // namespace snvs
