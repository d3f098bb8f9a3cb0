#pragma once

#include <string>
#include <unordered_map>

#include "snvs/csv.hpp"
#include "snvs/types.hpp"

namespace snvs {

/// Load an aligned dataset from three CSV files. The locations file fixes
/// the canonical row order; presence and covariate rows are matched by id.
/// Formats: locations `id,x,y` or `id,lon,lat`; presence `id,<taxa...>` with
/// 0/1 cells; covariates `id,<names...>` with real cells.
inline Dataset load_dataset(const std::string& locations_path, const std::string& presence_path,
                            const std::string& covariates_path) {
  Dataset ds;

  const CsvTable loc = read_csv(locations_path);
  if (loc.header.size() != 3)
    throw data_error(locations_path + ": expected 3 columns (id,x,y or id,lon,lat)");
  ds.locations.geographic = (loc.header[1] == "lon" && loc.header[2] == "lat");
  for (std::size_t i = 0; i < loc.rows.size(); ++i) {
    const auto& row = loc.rows[i];
    SpatialLocation p;
    p.id = row[0];
    p.x = parse_double(row[1], locations_path + " row " + std::to_string(i + 2));
    p.y = parse_double(row[2], locations_path + " row " + std::to_string(i + 2));
    ds.locations.points.push_back(std::move(p));
  }
  ds.locations.validate();
  const Eigen::Index n = static_cast<Eigen::Index>(ds.locations.size());
  if (n == 0) throw data_error(locations_path + ": no data rows");

  std::unordered_map<std::string, Eigen::Index> order;
  for (Eigen::Index i = 0; i < n; ++i) order[ds.locations.points[static_cast<std::size_t>(i)].id] = i;

  auto load_by_id = [&](const CsvTable& t, const std::string& path) {
    if (static_cast<Eigen::Index>(t.rows.size()) != n)
      throw data_error(path + ": has " + std::to_string(t.rows.size()) + " data rows, expected " +
                       std::to_string(n) + " to match the locations file");
    Matrix M(n, static_cast<Eigen::Index>(t.header.size()) - 1);
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const auto it = order.find(t.rows[r][0]);
      if (it == order.end())
        throw data_error(path + " row " + std::to_string(r + 2) + ": unknown id '" + t.rows[r][0] + "'");
      if (seen[static_cast<std::size_t>(it->second)])
        throw data_error(path + " row " + std::to_string(r + 2) + ": duplicate id '" + t.rows[r][0] + "'");
      seen[static_cast<std::size_t>(it->second)] = true;
      for (std::size_t c = 1; c < t.rows[r].size(); ++c)
        M(it->second, static_cast<Eigen::Index>(c - 1)) =
            parse_double(t.rows[r][c], path + " row " + std::to_string(r + 2) + ", column " +
                                           std::to_string(c + 1));
    }
    return M;
  };

  const CsvTable pres = read_csv(presence_path);
  if (pres.header.size() < 2) throw data_error(presence_path + ": expected id plus taxon columns");
  ds.presence.values = load_by_id(pres, presence_path);
  ds.presence.taxon_names.assign(pres.header.begin() + 1, pres.header.end());
  for (Eigen::Index i = 0; i < ds.presence.values.rows(); ++i)
    for (Eigen::Index j = 0; j < ds.presence.values.cols(); ++j)
      if (ds.presence.values(i, j) != 0.0 && ds.presence.values(i, j) != 1.0)
        throw data_error(presence_path + ": entry for id '" +
                         ds.locations.points[static_cast<std::size_t>(i)].id + "', taxon '" +
                         ds.presence.taxon_names[static_cast<std::size_t>(j)] + "' is " +
                         format_double(ds.presence.values(i, j)) + ", expected 0 or 1");

  const CsvTable cov = read_csv(covariates_path);
  if (cov.header.size() < 2) throw data_error(covariates_path + ": expected id plus covariate columns");
  ds.covariates.values = load_by_id(cov, covariates_path);
  ds.covariates.names.assign(cov.header.begin() + 1, cov.header.end());

  return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& locations_path,
                         const std::string& presence_path, const std::string& covariates_path) {
  const Eigen::Index n = static_cast<Eigen::Index>(ds.locations.size());
  {
    std::vector<std::string> header = {"id", ds.locations.geographic ? "lon" : "x",
                                       ds.locations.geographic ? "lat" : "y"};
    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& p = ds.locations.points[static_cast<std::size_t>(i)];
      rows.push_back({p.id, format_double(p.x), format_double(p.y)});
    }
    write_csv(locations_path, header, rows);
  }
  {
    std::vector<std::string> header = {"id"};
    header.insert(header.end(), ds.presence.taxon_names.begin(), ds.presence.taxon_names.end());
    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index i = 0; i < n; ++i) {
      std::vector<std::string> row = {ds.locations.points[static_cast<std::size_t>(i)].id};
      for (Eigen::Index j = 0; j < ds.presence.m(); ++j)
        row.push_back(ds.presence.values(i, j) != 0.0 ? "1" : "0");
      rows.push_back(std::move(row));
    }
    write_csv(presence_path, header, rows);
  }
  {
    std::vector<std::string> header = {"id"};
    header.insert(header.end(), ds.covariates.names.begin(), ds.covariates.names.end());
    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index i = 0; i < n; ++i) {
      std::vector<std::string> row = {ds.locations.points[static_cast<std::size_t>(i)].id};
      for (Eigen::Index r = 0; r < ds.covariates.p(); ++r)
        row.push_back(format_double(ds.covariates.values(i, r)));
      rows.push_back(std::move(row));
    }
    write_csv(covariates_path, header, rows);
  }
}

}  // namespace snvs
