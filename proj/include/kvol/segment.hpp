#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "kvol/grid.hpp"
#include "kvol/preprocess.hpp"
#include "kvol/volume_io.hpp"

// Pluggable per-station segmenters. This is the seam where a learned model
// sits in production: the pipeline only requires a binary label volume with
// the trimmed station's geometry. Two implementations ship: a deterministic
// intensity-threshold baseline, and import of externally produced masks
// (e.g. written by a separate inference process driven through the
// SliceStack input contract).

namespace kvol {

enum class SegmenterKind { threshold_baseline, external_masks };

struct SegmenterSpec {
  SegmenterKind kind = SegmenterKind::threshold_baseline;
  // threshold_baseline: label voxels whose per-slice normalized intensity
  // exceeds this fraction. Normalization here defaults to no clipping so the
  // baseline is exact on noise-free inputs.
  double threshold = 0.5;
  double clip_fraction = 0.0;
  // external_masks: directory of per-station label volumes, keyed as
  // <subject_id>_station<index>_mask.nii (or .raw).
  std::filesystem::path mask_dir;
};

inline SegmenterKind segmenter_kind_from_string(const std::string& name) {
  if (name == "threshold_baseline") return SegmenterKind::threshold_baseline;
  if (name == "external_masks") return SegmenterKind::external_masks;
  throw std::invalid_argument("unknown segmenter kind '" + name + "' (threshold_baseline, external_masks)");
}

inline const char* to_string(SegmenterKind kind) {
  return kind == SegmenterKind::threshold_baseline ? "threshold_baseline" : "external_masks";
}

// Candidate mask filenames for a subject/station under the configured mask
// directory; the first existing one wins.
inline std::filesystem::path resolve_mask_path(const std::filesystem::path& mask_dir, const std::string& subject_id,
                                               int station_index) {
  const std::string stem = subject_id + "_station" + std::to_string(station_index) + "_mask";
  for (const char* ext : {".nii", ".raw"}) {
    const std::filesystem::path p = mask_dir / (stem + ext);
    if (std::filesystem::exists(p)) return p;
  }
  throw std::runtime_error("missing external mask for subject '" + subject_id + "' station " +
                           std::to_string(station_index) + " under '" + mask_dir.string() + "' (expected " + stem +
                           ".nii or .raw)");
}

// Threshold baseline: per-slice normalization followed by a fixed cut.
inline VolumeGrid<std::uint8_t> threshold_segment(const VolumeGrid<float>& trimmed_station, double threshold,
                                                  double clip_fraction = 0.0) {
  const VolumeGrid<float> normalized = normalize_station(trimmed_station, clip_fraction);
  VolumeGrid<std::uint8_t> labels(trimmed_station.geometry());
  for (std::size_t i = 0; i < normalized.size(); ++i)
    labels.values()[i] = normalized.values()[i] > threshold ? 1 : 0;
  return labels;
}

// Validates an imported mask against the station it claims to label. Dims
// must match exactly; the mask then adopts the station's physical geometry.
inline VolumeGrid<std::uint8_t> adopt_external_mask(const VolumeGrid<float>& trimmed_station,
                                                    VolumeGrid<std::uint8_t> mask) {
  const Index3& sd = trimmed_station.dims();
  const Index3& md = mask.dims();
  if (sd != md) {
    const auto shape = [](const Index3& d) {
      return std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" + std::to_string(d[2]);
    };
    throw std::runtime_error("external mask shape " + shape(md) + " does not match station shape " + shape(sd));
  }
  return VolumeGrid<std::uint8_t>(trimmed_station.geometry(), std::move(mask.values()));
}

// Produces the binary label volume for one trimmed station. The optional
// explicit mask path overrides the mask-directory lookup.
inline VolumeGrid<std::uint8_t> segment_station(const VolumeGrid<float>& trimmed_station, const SegmenterSpec& spec,
                                                const std::string& subject_id = "", int station_index = 0,
                                                const std::optional<std::filesystem::path>& explicit_mask = {}) {
  switch (spec.kind) {
    case SegmenterKind::threshold_baseline:
      return threshold_segment(trimmed_station, spec.threshold, spec.clip_fraction);
    case SegmenterKind::external_masks: {
      const std::filesystem::path path =
          explicit_mask ? *explicit_mask : resolve_mask_path(spec.mask_dir, subject_id, station_index);
      return adopt_external_mask(trimmed_station, load_label_volume(path));
    }
  }
  throw std::logic_error("unreachable segmenter kind");
}

}  // namespace kvol
