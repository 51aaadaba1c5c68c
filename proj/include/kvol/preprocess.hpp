#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "kvol/grid.hpp"

// Network-input preprocessing: axial slice trimming, per-slice intensity
// normalization with top-percentile clipping, periodic 2.5D stacking, and
// symmetric zero-padding. These functions define the input contract for any
// slice-wise segmenter driven through this pipeline.

namespace kvol {

// Padded in-plane shape of one 2.5D input sample.
inline constexpr int kStackWidth = 224;
inline constexpr int kStackHeight = 192;
// Native in-plane shape of a kidney station slice.
inline constexpr int kStationWidth = 224;
inline constexpr int kStationHeight = 174;

// One axial plane, x-fastest.
struct Plane {
  int nx = 0;
  int ny = 0;
  std::vector<float> values;

  Plane() = default;
  Plane(int width, int height, float fill = 0.0f)
      : nx(width), ny(height), values(static_cast<std::size_t>(width) * height, fill) {}

  float at(int x, int y) const { return values[static_cast<std::size_t>(y) * nx + x]; }
  float& at(int x, int y) { return values[static_cast<std::size_t>(y) * nx + x]; }
};

// Three adjacent normalized slices (below, target, above), each padded to
// kStackWidth x kStackHeight, forming one 2.5D sample.
struct SliceStack {
  int target_index = 0;  // z index of the central slice in the trimmed station
  std::array<Plane, 3> planes;
};

// Drops the n_trim lowest and n_trim highest axial slices; those are the
// artefact-prone station edges. The origin shifts up by n_trim slices so the
// remaining voxels keep their world positions.
template <typename T>
VolumeGrid<T> trim_station(const VolumeGrid<T>& station, int n_trim = 3) {
  if (n_trim < 0) throw std::invalid_argument("n_trim must be >= 0");
  const GridGeometry& g = station.geometry();
  if (n_trim == 0) return station;
  if (g.dims[2] <= 2 * n_trim)
    throw std::invalid_argument("cannot trim " + std::to_string(n_trim) + " slices per side from a station with nz=" +
                                std::to_string(g.dims[2]));

  GridGeometry out_geom = g;
  out_geom.dims[2] = g.dims[2] - 2 * n_trim;
  out_geom.origin[2] = g.origin[2] + n_trim * g.spacing[2];

  const std::size_t plane = static_cast<std::size_t>(g.dims[0]) * g.dims[1];
  std::vector<T> out(plane * out_geom.dims[2]);
  std::copy_n(station.values().begin() + static_cast<std::ptrdiff_t>(plane) * n_trim, out.size(), out.begin());
  return VolumeGrid<T>(out_geom, std::move(out));
}

namespace detail {

// Nearest-rank quantile on the sorted copy of the values: deterministic and
// free of interpolation ambiguity.
inline float nearest_rank_quantile(std::vector<float> values, double q) {
  const std::size_t n = values.size();
  std::size_t rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
  rank = std::min(std::max<std::size_t>(rank, 1), n);
  std::nth_element(values.begin(), values.begin() + (rank - 1), values.end());
  return values[rank - 1];
}

}  // namespace detail

// Clips the brightest clip_fraction of values, then min-max maps into [0,1].
// Constant slices normalize to all zeros; air-only slices at station edges
// are common and must not error.
inline Plane normalize_slice(const Plane& slice, double clip_fraction = 0.01) {
  if (slice.values.empty()) throw std::invalid_argument("cannot normalize an empty slice");
  if (clip_fraction < 0.0 || clip_fraction >= 1.0)
    throw std::invalid_argument("clip_fraction must be in [0, 1)");

  const float lo = *std::min_element(slice.values.begin(), slice.values.end());
  float hi;
  if (clip_fraction == 0.0) {
    hi = *std::max_element(slice.values.begin(), slice.values.end());
  } else {
    hi = detail::nearest_rank_quantile(slice.values, 1.0 - clip_fraction);
  }

  Plane out(slice.nx, slice.ny);
  if (!(hi > lo)) return out;  // degenerate: constant slice -> zeros

  const float inv = 1.0f / (hi - lo);
  for (std::size_t i = 0; i < slice.values.size(); ++i) {
    const float v = std::min(slice.values[i], hi);
    out.values[i] = (v - lo) * inv;
  }
  return out;
}

inline Plane extract_slice(const VolumeGrid<float>& station, int z) {
  const GridGeometry& g = station.geometry();
  if (z < 0 || z >= g.dims[2])
    throw std::out_of_range("slice index " + std::to_string(z) + " out of range (nz=" + std::to_string(g.dims[2]) + ")");
  Plane p(g.dims[0], g.dims[1]);
  const std::size_t plane = static_cast<std::size_t>(g.dims[0]) * g.dims[1];
  std::copy_n(station.values().begin() + static_cast<std::ptrdiff_t>(plane) * z, plane, p.values.begin());
  return p;
}

// Symmetric zero-padding to (target_nx, target_ny). Odd remainders put the
// extra column on the high side, so unpad_plane can invert exactly.
inline Plane pad_plane(const Plane& slice, int target_nx = kStackWidth, int target_ny = kStackHeight) {
  if (slice.nx > target_nx || slice.ny > target_ny)
    throw std::invalid_argument("slice " + std::to_string(slice.nx) + "x" + std::to_string(slice.ny) +
                                " exceeds padding target " + std::to_string(target_nx) + "x" + std::to_string(target_ny));
  const int pad_x = (target_nx - slice.nx) / 2;
  const int pad_y = (target_ny - slice.ny) / 2;
  Plane out(target_nx, target_ny);
  for (int y = 0; y < slice.ny; ++y)
    for (int x = 0; x < slice.nx; ++x) out.at(x + pad_x, y + pad_y) = slice.at(x, y);
  return out;
}

inline Plane unpad_plane(const Plane& padded, int orig_nx, int orig_ny) {
  const int pad_x = (padded.nx - orig_nx) / 2;
  const int pad_y = (padded.ny - orig_ny) / 2;
  if (orig_nx > padded.nx || orig_ny > padded.ny)
    throw std::invalid_argument("unpadded shape exceeds the padded plane");
  Plane out(orig_nx, orig_ny);
  for (int y = 0; y < orig_ny; ++y)
    for (int x = 0; x < orig_nx; ++x) out.at(x, y) = padded.at(x + pad_x, y + pad_y);
  return out;
}

// Reverts the stack padding of a label plane back to the native station
// shape. unpad_labels(pad_plane(x)) == x.
inline Plane unpad_labels(const Plane& padded) {
  if (padded.nx != kStackWidth || padded.ny != kStackHeight)
    throw std::invalid_argument("padded label plane must be " + std::to_string(kStackWidth) + "x" +
                                std::to_string(kStackHeight) + ", got " + std::to_string(padded.nx) + "x" +
                                std::to_string(padded.ny));
  return unpad_plane(padded, kStationWidth, kStationHeight);
}

// Builds the 2.5D sample for slice z of a trimmed, per-slice-normalized
// station. Neighbor slices wrap periodically, so every plane is drawn from
// the trimmed station itself.
inline SliceStack make_stack(const VolumeGrid<float>& station, int z) {
  const int nz = station.geometry().dims[2];
  if (z < 0 || z >= nz)
    throw std::out_of_range("stack index " + std::to_string(z) + " out of range (nz=" + std::to_string(nz) + ")");

  const auto wrap = [nz](int i) { return ((i % nz) + nz) % nz; };
  SliceStack stack;
  stack.target_index = z;
  stack.planes[0] = pad_plane(extract_slice(station, wrap(z - 1)));
  stack.planes[1] = pad_plane(extract_slice(station, z));
  stack.planes[2] = pad_plane(extract_slice(station, wrap(z + 1)));
  return stack;
}

// Per-slice normalization of a whole station.
inline VolumeGrid<float> normalize_station(const VolumeGrid<float>& station, double clip_fraction = 0.01) {
  const GridGeometry& g = station.geometry();
  VolumeGrid<float> out(g);
  const std::size_t plane = static_cast<std::size_t>(g.dims[0]) * g.dims[1];
  for (int z = 0; z < g.dims[2]; ++z) {
    Plane n = normalize_slice(extract_slice(station, z), clip_fraction);
    std::copy(n.values.begin(), n.values.end(), out.values().begin() + static_cast<std::ptrdiff_t>(plane) * z);
  }
  return out;
}

}  // namespace kvol
