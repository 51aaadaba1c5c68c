#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "kvol/components.hpp"
#include "kvol/fusion.hpp"
#include "kvol/grid.hpp"

// Algorithmic quality ratings: five per-subject cost terms where higher means
// worse, plus the two-stage percentile exclusion protocol. Stage one rates
// image quality (image fusion, segmentation fusion, location); stage two
// rates segmentation quality (smoothness, scrap) over the stage-one
// survivors only.

namespace kvol {

// Sentinel cost for subjects whose segmentation is empty; finite, far above
// any attainable rating, and always stage-1 flagged.
inline constexpr double kEmptySegmentationCost = 1e9;

// Raw sums follow the station-agreement definitions; per_voxel divides by the
// overlap voxel count so cohorts with differing overlap sizes rank fairly.
struct FusionCost {
  double raw = 0.0;
  double per_voxel = 0.0;
};

namespace detail {

// Common-grid sub-geometry covering the overlap slab.
inline GridGeometry overlap_geometry(const GridGeometry& common, const OverlapRange& overlap) {
  if (overlap.empty) throw std::invalid_argument("stations have no overlap; fusion cost undefined");
  const double sz = common.spacing[2];
  int z_first = static_cast<int>(std::ceil((overlap.z_lo - common.origin[2]) / sz - 1e-6));
  int z_last = static_cast<int>(std::floor((overlap.z_hi - common.origin[2]) / sz + 1e-6));
  z_first = std::max(z_first, 0);
  z_last = std::min(z_last, common.dims[2] - 1);
  if (z_last < z_first) throw std::invalid_argument("overlap contains no voxel layer on the common grid");

  GridGeometry g = common;
  g.dims[2] = z_last - z_first + 1;
  g.origin[2] = common.origin[2] + z_first * sz;
  return g;
}

}  // namespace detail

// Sum of absolute intensity differences between the stations across the
// overlap on the common grid, normalized by the range of the combined
// overlap intensities (contrast invariance), and additionally per voxel.
// A zero intensity range costs nothing.
inline FusionCost image_fusion_cost(const VolumeGrid<float>& a_img, const VolumeGrid<float>& b_img,
                                    const OverlapRange& overlap) {
  const GridGeometry common = common_grid(a_img.geometry(), b_img.geometry());
  const GridGeometry slab = detail::overlap_geometry(common, overlap);

  const VolumeGrid<float> ra = resample_trilinear(a_img, slab);
  const VolumeGrid<float> rb = resample_trilinear(b_img, slab);

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  double sum_abs = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double va = ra.values()[i];
    const double vb = rb.values()[i];
    lo = std::min({lo, va, vb});
    hi = std::max({hi, va, vb});
    sum_abs += std::abs(va - vb);
  }

  const double range = hi - lo;
  FusionCost cost;
  if (range > 0.0) {
    cost.raw = sum_abs / range;
    cost.per_voxel = cost.raw / static_cast<double>(ra.size());
  }
  return cost;
}

// Count of overlap voxels whose binary labels disagree between the stations,
// raw and per voxel.
inline FusionCost segmentation_fusion_cost(const VolumeGrid<std::uint8_t>& a_lab,
                                           const VolumeGrid<std::uint8_t>& b_lab, const OverlapRange& overlap) {
  const GridGeometry common = common_grid(a_lab.geometry(), b_lab.geometry());
  const GridGeometry slab = detail::overlap_geometry(common, overlap);

  const VolumeGrid<float> ra = resample_trilinear(a_lab, slab);
  const VolumeGrid<float> rb = resample_trilinear(b_lab, slab);

  std::size_t disagree = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const int la = ra.values()[i] >= 0.5f ? 1 : 0;
    const int lb = rb.values()[i] >= 0.5f ? 1 : 0;
    disagree += static_cast<std::size_t>(la != lb);
  }

  FusionCost cost;
  cost.raw = static_cast<double>(disagree);
  cost.per_voxel = cost.raw / static_cast<double>(ra.size());
  return cost;
}

struct LocationCost {
  double value = 0.0;
  bool empty_labels = false;
};

// Offset of the labeled center of mass from the volume's mid-z line,
// normalized by the half extent: 0 centered, 1 at the volume edge. Empty
// segmentations return the sentinel and are reported distinctly.
inline LocationCost location_cost(const VolumeGrid<std::uint8_t>& fused_labels) {
  const GridGeometry& g = fused_labels.geometry();
  bool any = false;
  for (const auto v : fused_labels.values())
    if (v) {
      any = true;
      break;
    }
  if (!any) return {kEmptySegmentationCost, true};

  const CenterOfMass com = center_of_mass(fused_labels);
  const double half_extent = 0.5 * g.extent_mm(2);
  if (half_extent <= 0.0) return {0.0, false};
  return {std::abs(com.position[2] - g.mid_world(2)) / half_extent, false};
}

struct SmoothnessCost {
  double raw = 0.0;
  double normalized = 0.0;  // raw / labeled voxel count
};

// Absolute label differences between the volume and its one-voxel z-shifted
// copy: every sudden change between adjacent axial slices is penalized.
inline SmoothnessCost smoothness_cost(const VolumeGrid<std::uint8_t>& fused_labels) {
  const GridGeometry& g = fused_labels.geometry();
  const auto& v = fused_labels.values();
  const std::size_t plane = static_cast<std::size_t>(g.dims[0]) * g.dims[1];

  std::size_t transitions = 0;
  std::size_t labeled = 0;
  for (std::size_t i = 0; i < v.size(); ++i) labeled += v[i];
  for (int z = 0; z + 1 < g.dims[2]; ++z) {
    const std::size_t base = plane * static_cast<std::size_t>(z);
    for (std::size_t i = 0; i < plane; ++i)
      transitions += static_cast<std::size_t>(v[base + i] != v[base + plane + i]);
  }

  SmoothnessCost cost;
  cost.raw = static_cast<double>(transitions);
  cost.normalized = cost.raw / static_cast<double>(std::max<std::size_t>(1, labeled));
  return cost;
}

// Share of labeled voxels outside the two largest connected components.
inline double scrap_cost(const KidneyPair& pair) {
  return static_cast<double>(pair.scrap_voxels) /
         static_cast<double>(std::max<std::size_t>(1, pair.total_labeled));
}

struct QualityReport {
  std::string subject_id;
  double image_fusion_raw = 0.0;
  double image_fusion = 0.0;  // per-voxel normalized
  double segmentation_fusion_raw = 0.0;
  double segmentation_fusion = 0.0;  // per-voxel normalized
  double location = 0.0;
  double smoothness_raw = 0.0;
  double smoothness = 0.0;  // per labeled voxel
  double scrap = 0.0;
  bool empty_segmentation = false;
  // Labeled bounding box touches the first or last retained slice; controls
  // the automated location re-inclusion rule.
  bool bbox_touches_z = false;
  bool stage1_flagged = false;
  bool stage2_flagged = false;
  std::vector<std::string> attribution;  // which rating(s) triggered each flag
};

// Two-stage percentile policy. Percentiles are nearest-rank on descending
// cost with ties broken by subject id. The automated location re-inclusion
// approximates the manual recovery of subjects flagged only for border
// proximity while being too small to extend beyond the field of view.
struct FlaggingPolicy {
  double stage1_location = 0.01;
  double stage1_image_fusion = 0.01;
  double stage1_segmentation_fusion = 0.02;
  double stage2_smoothness = 0.01;
  double stage2_scrap = 0.01;
  bool auto_reinclude_location = true;
  bool use_normalized = true;  // rank per-voxel costs; raw sums otherwise

  void validate() const {
    for (const double f :
         {stage1_location, stage1_image_fusion, stage1_segmentation_fusion, stage2_smoothness, stage2_scrap})
      if (!(f > 0.0 && f < 1.0)) throw std::invalid_argument("flagging fractions must lie in (0, 1)");
  }
};

namespace detail {

// Indices of the worst ceil(fraction * n) entries under (cost desc,
// subject_id asc) ordering; deterministic under ties.
inline std::vector<std::size_t> worst_nearest_rank(const std::vector<QualityReport>& reports,
                                                   const std::vector<std::size_t>& eligible, double fraction,
                                                   double (*cost)(const QualityReport&)) {
  if (eligible.empty()) return {};
  const std::size_t k = std::min<std::size_t>(
      eligible.size(),
      static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(eligible.size()) - 1e-12)));
  std::vector<std::size_t> order = eligible;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double ca = cost(reports[a]);
    const double cb = cost(reports[b]);
    if (ca != cb) return ca > cb;
    return reports[a].subject_id < reports[b].subject_id;
  });
  order.resize(std::max<std::size_t>(k, 1));
  return order;
}

inline void add_attribution(QualityReport& report, const std::string& tag) {
  if (std::find(report.attribution.begin(), report.attribution.end(), tag) == report.attribution.end())
    report.attribution.push_back(tag);
}

}  // namespace detail

// Applies the two-stage protocol in place. Stage one marks the union of the
// worst fractions of location, image fusion, and segmentation fusion costs;
// stage two is computed over stage-one survivors only and marks the worst
// smoothness and scrap fractions. Empty segmentations are always stage-1
// flagged.
inline void apply_flagging(std::vector<QualityReport>& reports, const FlaggingPolicy& policy) {
  if (reports.empty()) throw std::invalid_argument("apply_flagging requires at least one report");
  policy.validate();

  for (auto& r : reports) {
    r.stage1_flagged = false;
    r.stage2_flagged = false;
    r.attribution.clear();
  }

  const bool use_norm = policy.use_normalized;
  const auto location = +[](const QualityReport& r) { return r.location; };
  const auto image_fusion_n = +[](const QualityReport& r) { return r.image_fusion; };
  const auto image_fusion_r = +[](const QualityReport& r) { return r.image_fusion_raw; };
  const auto seg_fusion_n = +[](const QualityReport& r) { return r.segmentation_fusion; };
  const auto seg_fusion_r = +[](const QualityReport& r) { return r.segmentation_fusion_raw; };
  const auto smooth_n = +[](const QualityReport& r) { return r.smoothness; };
  const auto smooth_r = +[](const QualityReport& r) { return r.smoothness_raw; };
  const auto scrap = +[](const QualityReport& r) { return r.scrap; };

  std::vector<std::size_t> all(reports.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

  for (const std::size_t i :
       detail::worst_nearest_rank(reports, all, policy.stage1_location, location)) {
    // Location flags on interior segmentations are trivially re-included:
    // the labeled volume cannot extend beyond a border it does not touch.
    if (policy.auto_reinclude_location && !reports[i].bbox_touches_z && !reports[i].empty_segmentation) {
      detail::add_attribution(reports[i], "location_reincluded");
    } else {
      detail::add_attribution(reports[i], "location");
    }
  }
  for (const std::size_t i : detail::worst_nearest_rank(reports, all, policy.stage1_image_fusion,
                                                        use_norm ? image_fusion_n : image_fusion_r))
    detail::add_attribution(reports[i], "image_fusion");
  for (const std::size_t i : detail::worst_nearest_rank(reports, all, policy.stage1_segmentation_fusion,
                                                        use_norm ? seg_fusion_n : seg_fusion_r))
    detail::add_attribution(reports[i], "segmentation_fusion");

  for (auto& r : reports) {
    if (r.empty_segmentation) detail::add_attribution(r, "empty_segmentation");
    for (const auto& tag : r.attribution)
      if (tag != "location_reincluded") r.stage1_flagged = true;
  }

  std::vector<std::size_t> survivors;
  for (std::size_t i = 0; i < reports.size(); ++i)
    if (!reports[i].stage1_flagged) survivors.push_back(i);
  if (survivors.empty()) return;

  for (const std::size_t i : detail::worst_nearest_rank(reports, survivors, policy.stage2_smoothness,
                                                        use_norm ? smooth_n : smooth_r)) {
    detail::add_attribution(reports[i], "smoothness");
    reports[i].stage2_flagged = true;
  }
  for (const std::size_t i : detail::worst_nearest_rank(reports, survivors, policy.stage2_scrap, scrap)) {
    detail::add_attribution(reports[i], "scrap");
    reports[i].stage2_flagged = true;
  }
}

}  // namespace kvol
