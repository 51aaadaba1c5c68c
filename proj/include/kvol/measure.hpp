#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "kvol/components.hpp"
#include "kvol/grid.hpp"

// Per-subject measurements: voxel-count volumes in cm^3, centers of mass,
// inter-kidney euclidean distance, scrap share.

namespace kvol {

// Voxel-count volume: count scaled with the physical voxel dimensions.
inline double measure_volume(std::size_t voxel_count, const Vec3& spacing_mm) {
  return static_cast<double>(voxel_count) * spacing_mm[0] * spacing_mm[1] * spacing_mm[2] / 1000.0;
}

// Euclidean distance between the kidney centers of mass; absent whenever a
// side is missing (single-kidney subjects are a value, not an error).
inline std::optional<double> kidney_distance(const KidneyPair& pair) {
  if (!pair.left || !pair.right) return std::nullopt;
  return norm(pair.left->com.position - pair.right->com.position);
}

struct MeasurementRecord {
  std::string subject_id;
  double vol_left_cm3 = 0.0;
  double vol_right_cm3 = 0.0;
  double vol_total_cm3 = 0.0;  // total labeled volume, scrap included
  std::optional<Vec3> com_left;
  std::optional<Vec3> com_right;
  std::optional<double> distance_mm;
  double scrap_share = 0.0;  // scrap voxels / total labeled voxels
};

// vol_total is the full labeled volume; per-side volumes are component
// volumes, so vol_left + vol_right <= vol_total with equality iff no scrap.
// Combined kidney volume in the table sense is left + right.
inline MeasurementRecord measure_subject(const std::string& subject_id, const KidneyPair& pair,
                                         const Vec3& spacing_mm) {
  MeasurementRecord rec;
  rec.subject_id = subject_id;
  if (pair.left) {
    rec.vol_left_cm3 = measure_volume(pair.left->size, spacing_mm);
    rec.com_left = pair.left->com.position;
  }
  if (pair.right) {
    rec.vol_right_cm3 = measure_volume(pair.right->size, spacing_mm);
    rec.com_right = pair.right->com.position;
  }
  rec.vol_total_cm3 = measure_volume(pair.total_labeled, spacing_mm);
  rec.distance_mm = kidney_distance(pair);
  rec.scrap_share =
      static_cast<double>(pair.scrap_voxels) / static_cast<double>(std::max<std::size_t>(1, pair.total_labeled));
  return rec;
}

}  // namespace kvol
