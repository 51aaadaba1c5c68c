#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "kvol/grid.hpp"

// Fusion of the two overlapping stations into one physically consistent
// volume: resample both onto a common voxel grid, then blend the overlap with
// a linear ramp along z. Labels follow the same path and are re-binarized at
// 0.5 (exact ties round to 1, which keeps thin structures).

namespace kvol {

// Inclusive world-z interval (voxel centers) where both stations contribute.
struct OverlapRange {
  bool empty = true;
  double z_lo = 0.0;
  double z_hi = 0.0;
};

// Blend weight of the lower station at world height z: 0 at the overlap top
// (upper station wins), 1 at the bottom. Single-slice overlaps split evenly.
inline double blend_weight_lower(const OverlapRange& overlap, double z) {
  if (overlap.empty) throw std::logic_error("blend weight undefined for empty overlap");
  const double span = overlap.z_hi - overlap.z_lo;
  if (span <= 0.0) return 0.5;
  return (overlap.z_hi - z) / span;
}

inline OverlapRange overlap_range(const GridGeometry& a, const GridGeometry& b) {
  const double lo = std::max(a.origin[2], b.origin[2]);
  const double hi = std::min(a.top_corner()[2], b.top_corner()[2]);
  if (lo > hi + 1e-9) return {};
  return {false, lo, hi};
}

// Common target geometry: the union of both extents at the finer of the two
// spacings, anchored at the lower corner.
inline GridGeometry common_grid(const GridGeometry& a, const GridGeometry& b) {
  a.validate();
  b.validate();

  // Reject stations separated along z by more than one slice (edge-to-edge).
  const double a_lo_edge = a.origin[2] - 0.5 * a.spacing[2];
  const double a_hi_edge = a.top_corner()[2] + 0.5 * a.spacing[2];
  const double b_lo_edge = b.origin[2] - 0.5 * b.spacing[2];
  const double b_hi_edge = b.top_corner()[2] + 0.5 * b.spacing[2];
  const double gap = std::max(b_lo_edge - a_hi_edge, a_lo_edge - b_hi_edge);
  if (gap > std::max(a.spacing[2], b.spacing[2]) + 1e-9)
    throw std::invalid_argument("stations do not overlap: z gap of " + std::to_string(gap) + " mm");

  GridGeometry out;
  const Vec3 a_top = a.top_corner();
  const Vec3 b_top = b.top_corner();
  for (int axis = 0; axis < 3; ++axis) {
    out.spacing[axis] = std::min(a.spacing[axis], b.spacing[axis]);
    out.origin[axis] = std::min(a.origin[axis], b.origin[axis]);
    const double span = std::max(a_top[axis], b_top[axis]) - out.origin[axis];
    out.dims[axis] = static_cast<int>(std::ceil(span / out.spacing[axis] - 1e-6)) + 1;
  }
  out.validate();
  return out;
}

struct FusedVolume {
  VolumeGrid<float> image;
  VolumeGrid<std::uint8_t> labels;
  OverlapRange overlap;
};

namespace detail {

inline std::uint8_t binarize(double v) { return v >= 0.5 ? 1 : 0; }

}  // namespace detail

// Fuses station images and their label volumes. The upper station is the one
// whose z extent reaches higher, regardless of argument order; label grids
// must match their image grids geometrically.
inline FusedVolume fuse(const VolumeGrid<float>& a_img, const VolumeGrid<float>& b_img,
                        const VolumeGrid<std::uint8_t>& a_lab, const VolumeGrid<std::uint8_t>& b_lab) {
  if (a_lab.geometry() != a_img.geometry() || b_lab.geometry() != b_img.geometry())
    throw std::invalid_argument("label grids must share their station's geometry");

  const bool a_is_upper = a_img.geometry().top_corner()[2] >= b_img.geometry().top_corner()[2];
  const VolumeGrid<float>& up_img = a_is_upper ? a_img : b_img;
  const VolumeGrid<float>& lo_img = a_is_upper ? b_img : a_img;
  const VolumeGrid<std::uint8_t>& up_lab = a_is_upper ? a_lab : b_lab;
  const VolumeGrid<std::uint8_t>& lo_lab = a_is_upper ? b_lab : a_lab;

  const GridGeometry target = common_grid(up_img.geometry(), lo_img.geometry());
  const OverlapRange overlap = overlap_range(up_img.geometry(), lo_img.geometry());

  const VolumeGrid<float> ru_img = resample_trilinear(up_img, target);
  const VolumeGrid<float> rl_img = resample_trilinear(lo_img, target);
  const VolumeGrid<float> ru_lab = resample_trilinear(up_lab, target);
  const VolumeGrid<float> rl_lab = resample_trilinear(lo_lab, target);

  VolumeGrid<float> image(target);
  VolumeGrid<std::uint8_t> labels(target);

  const std::size_t plane = static_cast<std::size_t>(target.dims[0]) * target.dims[1];
  const double up_z0 = up_img.geometry().origin[2];

  for (int z = 0; z < target.dims[2]; ++z) {
    const double wz = target.origin[2] + z * target.spacing[2];
    const std::size_t base = plane * static_cast<std::size_t>(z);

    enum class Mode { UpperOnly, LowerOnly, Blend } mode;
    double w = 0.0;
    if (!overlap.empty && wz >= overlap.z_lo - 1e-9 && wz <= overlap.z_hi + 1e-9) {
      mode = Mode::Blend;
      w = std::clamp(blend_weight_lower(overlap, wz), 0.0, 1.0);
    } else if (wz >= up_z0) {
      mode = Mode::UpperOnly;
    } else {
      mode = Mode::LowerOnly;
    }

    for (std::size_t i = base; i < base + plane; ++i) {
      switch (mode) {
        case Mode::UpperOnly:
          image.values()[i] = ru_img.values()[i];
          labels.values()[i] = detail::binarize(ru_lab.values()[i]);
          break;
        case Mode::LowerOnly:
          image.values()[i] = rl_img.values()[i];
          labels.values()[i] = detail::binarize(rl_lab.values()[i]);
          break;
        case Mode::Blend: {
          const float vu = ru_img.values()[i];
          const float vl = rl_img.values()[i];
          image.values()[i] = (vu == vl) ? vu : static_cast<float>((1.0 - w) * vu + w * vl);
          const double lu = ru_lab.values()[i];
          const double ll = rl_lab.values()[i];
          labels.values()[i] = detail::binarize((1.0 - w) * lu + w * ll);
          break;
        }
      }
    }
  }
  return {std::move(image), std::move(labels), overlap};
}

}  // namespace kvol
