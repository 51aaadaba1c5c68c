#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "kvol/csv.hpp"

// Cohort manifest: one row per subject with the two station volumes,
// optional per-station mask paths, and optional reference measurement
// columns (ref_*). Relative paths resolve against the manifest's directory.

namespace kvol {

struct ManifestRow {
  std::string subject_id;
  std::filesystem::path station2;
  std::filesystem::path station3;
  std::optional<std::filesystem::path> mask2;
  std::optional<std::filesystem::path> mask3;
  std::map<std::string, double> reference;  // ref_* columns, name without prefix
};

struct Manifest {
  std::vector<ManifestRow> rows;
};

inline Manifest load_manifest(const std::filesystem::path& path) {
  const CsvTable table = read_csv(path);
  const std::string ctx = "manifest '" + path.string() + "'";
  const std::size_t col_id = table.column("subject_id", ctx);
  const std::size_t col_s2 = table.column("station2", ctx);
  const std::size_t col_s3 = table.column("station3", ctx);

  std::optional<std::size_t> col_m2, col_m3;
  std::vector<std::pair<std::size_t, std::string>> ref_cols;
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    const std::string& name = table.header[i];
    if (name == "subject_id" || name == "station2" || name == "station3") continue;
    if (name == "mask2")
      col_m2 = i;
    else if (name == "mask3")
      col_m3 = i;
    else if (name.rfind("ref_", 0) == 0)
      ref_cols.emplace_back(i, name.substr(4));
    else
      throw std::runtime_error(ctx + ": unknown column '" + name + "'");
  }

  const std::filesystem::path base = path.parent_path();
  const auto resolve = [&base](const std::string& p) {
    const std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };

  Manifest manifest;
  std::unordered_set<std::string> seen;
  for (const auto& row : table.rows) {
    ManifestRow r;
    r.subject_id = row[col_id];
    if (r.subject_id.empty()) throw std::runtime_error(ctx + ": empty subject_id");
    if (!seen.insert(r.subject_id).second)
      throw std::runtime_error(ctx + ": duplicate subject_id '" + r.subject_id + "'");
    r.station2 = resolve(row[col_s2]);
    r.station3 = resolve(row[col_s3]);
    if (col_m2 && !row[*col_m2].empty()) r.mask2 = resolve(row[*col_m2]);
    if (col_m3 && !row[*col_m3].empty()) r.mask3 = resolve(row[*col_m3]);
    for (const auto& [idx, name] : ref_cols)
      if (!row[idx].empty()) r.reference[name] = parse_double(row[idx], ctx);
    manifest.rows.push_back(std::move(r));
  }
  if (manifest.rows.empty()) throw std::runtime_error(ctx + ": no subject rows");
  return manifest;
}

}  // namespace kvol
