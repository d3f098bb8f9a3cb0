#pragma once

#include <cmath>

#include "snvs/types.hpp"

namespace snvs {

/// Haversine great-circle distance in miles between (lon, lat) points in degrees.
inline double haversine_miles(double lon1, double lat1, double lon2, double lat2) {
  constexpr double deg = M_PI / 180.0;
  const double phi1 = lat1 * deg;
  const double phi2 = lat2 * deg;
  const double dphi = (lat2 - lat1) * deg;
  const double dlam = (lon2 - lon1) * deg;
  const double sp = std::sin(0.5 * dphi);
  const double sl = std::sin(0.5 * dlam);
  const double h = sp * sp + std::cos(phi1) * std::cos(phi2) * sl * sl;
  return kEarthRadiusMiles * 2.0 * std::asin(std::min(1.0, std::sqrt(h)));
}

inline DistanceMatrix pairwise_distances(const LocationSet& locs, DistanceMetric metric) {
  if (metric == DistanceMetric::GreatCircleMiles && !locs.geographic)
    throw data_error("great-circle distance requested on planar coordinates");
  const Eigen::Index n = static_cast<Eigen::Index>(locs.size());
  DistanceMatrix D;
  D.metric = metric;
  D.values = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const auto& a = locs.points[static_cast<std::size_t>(i)];
      const auto& b = locs.points[static_cast<std::size_t>(j)];
      double d;
      if (metric == DistanceMetric::GreatCircleMiles) {
        d = haversine_miles(a.x, a.y, b.x, b.y);
      } else {
        d = std::hypot(a.x - b.x, a.y - b.y);
      }
      D.values(i, j) = d;
      D.values(j, i) = d;
    }
  }
  return D;
}

}  // namespace snvs
