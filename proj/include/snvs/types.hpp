#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace snvs {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntMatrix = Eigen::MatrixXi;

/// Thrown when input data violates a documented contract.
class data_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when a required input file is missing or unreadable.
class io_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SpatialLocation {
  std::string id;
  double x = 0.0;  // planar x, or longitude in decimal degrees
  double y = 0.0;  // planar y, or latitude in decimal degrees
};

enum class DistanceMetric { Euclidean, GreatCircleMiles };

/// Earth radius used for great-circle distances, in miles.
inline constexpr double kEarthRadiusMiles = 3958.8;

struct LocationSet {
  std::vector<SpatialLocation> points;
  bool geographic = false;  // true: (x, y) = (lon, lat), great-circle applies

  std::size_t size() const { return points.size(); }

  void validate() const {
    std::vector<std::string> ids;
    ids.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto& p = points[i];
      if (geographic) {
        if (p.y < -90.0 || p.y > 90.0)
          throw data_error("location row " + std::to_string(i + 1) + " (id '" + p.id +
                           "'): latitude " + std::to_string(p.y) + " outside [-90, 90]");
        if (p.x < -180.0 || p.x > 180.0)
          throw data_error("location row " + std::to_string(i + 1) + " (id '" + p.id +
                           "'): longitude " + std::to_string(p.x) + " outside [-180, 180]");
      }
      ids.push_back(p.id);
    }
    std::sort(ids.begin(), ids.end());
    for (std::size_t i = 1; i < ids.size(); ++i)
      if (ids[i] == ids[i - 1]) throw data_error("duplicate location id '" + ids[i] + "'");
  }
};

/// n x m binary observations, one column per taxon.
struct PresenceMatrix {
  Matrix values;  // entries in {0, 1}
  std::vector<std::string> taxon_names;

  Eigen::Index n() const { return values.rows(); }
  Eigen::Index m() const { return values.cols(); }

  void validate() const {
    if (values.rows() < 1 || values.cols() < 1)
      throw data_error("presence matrix must have at least one row and one column");
    for (Eigen::Index i = 0; i < values.rows(); ++i)
      for (Eigen::Index j = 0; j < values.cols(); ++j)
        if (values(i, j) != 0.0 && values(i, j) != 1.0)
          throw data_error("presence entry at row " + std::to_string(i + 1) + ", column " +
                           std::to_string(j + 1) + " is not 0/1");
  }
};

/// n x p design matrix with covariate names.
struct CovariateMatrix {
  Matrix values;
  std::vector<std::string> names;
  bool standardized = false;

  Eigen::Index n() const { return values.rows(); }
  Eigen::Index p() const { return values.cols(); }
};

struct DistanceMatrix {
  Matrix values;  // symmetric, zero diagonal
  DistanceMetric metric = DistanceMetric::Euclidean;
};

struct Dataset {
  LocationSet locations;
  PresenceMatrix presence;
  CovariateMatrix covariates;

  Eigen::Index n() const { return presence.n(); }
  Eigen::Index m() const { return presence.m(); }
  Eigen::Index p() const { return covariates.p(); }
};

/// Column-standardize to mean 0, sd 1 (sample sd, n-1 divisor).
/// Constant columns are rejected by name.
inline CovariateMatrix standardize(const CovariateMatrix& X) {
  const Eigen::Index n = X.values.rows();
  if (n < 2) throw data_error("standardize: need at least 2 rows");
  CovariateMatrix out = X;
  for (Eigen::Index r = 0; r < X.values.cols(); ++r) {
    const double mean = X.values.col(r).mean();
    const double ss = (X.values.col(r).array() - mean).square().sum();
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (sd < 1e-12) {
      const std::string name =
          r < static_cast<Eigen::Index>(X.names.size()) ? X.names[r] : std::to_string(r + 1);
      throw data_error("standardize: covariate '" + name + "' is constant");
    }
    out.values.col(r) = (X.values.col(r).array() - mean) / sd;
  }
  out.standardized = true;
  return out;
}

}  // namespace snvs
