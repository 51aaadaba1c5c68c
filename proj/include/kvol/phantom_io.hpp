#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "kvol/csv.hpp"
#include "kvol/measure.hpp"
#include "kvol/phantom.hpp"
#include "kvol/volume_io.hpp"

// Writes a synthetic cohort to disk in the pipeline's own input layout:
// station volumes, a manifest, a reference measurements CSV built from the
// ground truth, and an artifact log for test introspection. Optionally also
// per-station truth masks for exercising the external-mask segmenter.

namespace kvol {

struct CohortFiles {
  std::filesystem::path manifest_csv;
  std::filesystem::path reference_csv;
  std::filesystem::path artifacts_csv;
  std::filesystem::path mask_dir;  // empty unless masks were written
};

inline CohortFiles write_phantom_cohort(const CohortOptions& opts, const std::filesystem::path& out_dir,
                                        bool write_masks = false) {
  if (opts.subjects < 1) throw std::invalid_argument("cohort needs at least one subject");
  const std::filesystem::path stations_dir = out_dir / "stations";
  std::filesystem::create_directories(stations_dir);
  std::filesystem::path mask_dir;
  if (write_masks) {
    mask_dir = out_dir / "masks";
    std::filesystem::create_directories(mask_dir);
  }

  CsvTable manifest;
  manifest.header = {"subject_id", "station2", "station3"};
  CsvTable reference;
  reference.header = {"subject_id", "vol_left_cm3", "vol_right_cm3", "vol_total_cm3", "distance_mm", "scrap_share"};
  CsvTable artifacts;
  artifacts.header = {"subject_id", "artifact", "detail"};

  for (int i = 0; i < opts.subjects; ++i) {
    const std::string id = cohort_subject_id(i);
    const PhantomSpec spec = cohort_subject_spec(opts, i);
    const PhantomResult phantom = generate(spec, cohort_subject_seed(opts, i));

    const std::string s2_name = id + "_station2.nii";
    const std::string s3_name = id + "_station3.nii";
    save_volume(stations_dir / s2_name, phantom.stations.station2);
    save_volume(stations_dir / s3_name, phantom.stations.station3);
    manifest.rows.push_back({id, "stations/" + s2_name, "stations/" + s3_name});

    if (write_masks) {
      save_volume(mask_dir / (id + "_station2_mask.nii"), station_truth_mask(spec, 2));
      save_volume(mask_dir / (id + "_station3_mask.nii"), station_truth_mask(spec, 3));
    }

    // Reference row from the ground truth: voxel-count volumes on the truth
    // lattice, distance between the truth centers of mass.
    const double mid_x = truth_geometry(spec).mid_world(0);
    double vol_left = 0.0, vol_right = 0.0, vol_total = 0.0;
    const Vec3* com_left = nullptr;
    const Vec3* com_right = nullptr;
    for (const auto& k : phantom.kidneys) {
      const double v = measure_volume(k.truth_voxels, spec.spacing);
      vol_total += v;
      if (k.truth_com[0] > mid_x && k.truth_voxels > 0) {
        vol_left += v;
        com_left = &k.truth_com;
      } else if (k.truth_voxels > 0) {
        vol_right += v;
        com_right = &k.truth_com;
      }
    }
    std::string distance;
    if (com_left && com_right) distance = format_double(norm(*com_left - *com_right));
    reference.rows.push_back({id, format_double(vol_left), format_double(vol_right), format_double(vol_total),
                              distance, format_double(0.0)});

    const CohortArtifactKind kind = cohort_artifact_kind(opts, i);
    std::string detail;
    switch (kind) {
      case CohortArtifactKind::motion:
        detail = "shift_z=" + std::to_string(spec.artifacts.motion_shift_voxels[2]);
        break;
      case CohortArtifactKind::islands:
        detail = "islands=" + std::to_string(spec.artifacts.island_count) +
                 " size=" + std::to_string(spec.artifacts.island_size);
        break;
      case CohortArtifactKind::cysts:
        detail = "cysts=" + std::to_string(spec.artifacts.cysts.size());
        break;
      case CohortArtifactKind::missing_kidney:
        detail = spec.artifacts.delete_kidney == KidneySide::left ? "side=left" : "side=right";
        break;
      case CohortArtifactKind::location_shift:
        detail = "pushed to top border";
        break;
      case CohortArtifactKind::none:
        break;
    }
    artifacts.rows.push_back({id, to_string(kind), detail});
  }

  CohortFiles files;
  files.manifest_csv = out_dir / "manifest.csv";
  files.reference_csv = out_dir / "reference.csv";
  files.artifacts_csv = out_dir / "artifacts.csv";
  files.mask_dir = mask_dir;
  write_csv(files.manifest_csv, manifest);
  write_csv(files.reference_csv, reference);
  write_csv(files.artifacts_csv, artifacts);
  return files;
}

}  // namespace kvol
