#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

// Core volumetric data model: dense scalar grids with physical geometry.
//
// Axis convention (fixed for the whole pipeline, asserted at load time):
//   x - lateral, increasing toward the subject's anatomical left
//   y - anterior-posterior, increasing toward posterior
//   z - longitudinal, increasing toward the head
// Values are stored x-fastest. Geometry arithmetic is double precision;
// voxel payloads are float (intensities) or uint8 (binary labels).

namespace kvol {

using Vec3 = std::array<double, 3>;
using Index3 = std::array<int, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(const Vec3& a, double k) { return {a[0] * k, a[1] * k, a[2] * k}; }

inline double norm(const Vec3& v) {
  return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
}

inline const char* axis_name(int axis) {
  static const char* names[3] = {"x", "y", "z"};
  return names[axis];
}

// Physical placement of a voxel lattice. `origin` is the world position of
// the center of voxel (0,0,0).
struct GridGeometry {
  Index3 dims{0, 0, 0};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{0.0, 0.0, 0.0};

  bool operator==(const GridGeometry&) const = default;

  void validate() const {
    for (int a = 0; a < 3; ++a) {
      if (dims[a] < 1)
        throw std::invalid_argument("grid dims must be >= 1 on axis " + std::string(axis_name(a)));
      if (!(spacing[a] > 0.0))
        throw std::invalid_argument("grid spacing must be > 0 on axis " + std::string(axis_name(a)));
    }
  }

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
           static_cast<std::size_t>(dims[2]);
  }

  std::size_t linear_index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(z));
  }

  Index3 delinearize(std::size_t idx) const {
    const auto nx = static_cast<std::size_t>(dims[0]);
    const auto ny = static_cast<std::size_t>(dims[1]);
    return {static_cast<int>(idx % nx), static_cast<int>((idx / nx) % ny), static_cast<int>(idx / (nx * ny))};
  }

  bool in_bounds(const Index3& i) const {
    return i[0] >= 0 && i[0] < dims[0] && i[1] >= 0 && i[1] < dims[1] && i[2] >= 0 && i[2] < dims[2];
  }

  // World position of a voxel center. Out-of-bounds indices are rejected with
  // the offending axis named.
  Vec3 voxel_to_world(const Index3& index) const {
    for (int a = 0; a < 3; ++a) {
      if (index[a] < 0 || index[a] >= dims[a])
        throw std::out_of_range("voxel index " + std::to_string(index[a]) + " out of bounds on axis " +
                                axis_name(a) + " (n" + axis_name(a) + "=" + std::to_string(dims[a]) + ")");
    }
    return {origin[0] + index[0] * spacing[0], origin[1] + index[1] * spacing[1],
            origin[2] + index[2] * spacing[2]};
  }

  // Continuous voxel coordinates of a world position (no bounds check).
  Vec3 world_to_voxel_continuous(const Vec3& p) const {
    return {(p[0] - origin[0]) / spacing[0], (p[1] - origin[1]) / spacing[1], (p[2] - origin[2]) / spacing[2]};
  }

  Index3 world_to_voxel(const Vec3& p) const {
    const Vec3 c = world_to_voxel_continuous(p);
    return {static_cast<int>(std::llround(c[0])), static_cast<int>(std::llround(c[1])),
            static_cast<int>(std::llround(c[2]))};
  }

  // World position of the last voxel center along each axis.
  Vec3 top_corner() const {
    return {origin[0] + (dims[0] - 1) * spacing[0], origin[1] + (dims[1] - 1) * spacing[1],
            origin[2] + (dims[2] - 1) * spacing[2]};
  }

  double extent_mm(int axis) const { return (dims[axis] - 1) * spacing[axis]; }
  double mid_world(int axis) const { return origin[axis] + 0.5 * extent_mm(axis); }
};

// Dense scalar field over a GridGeometry. Immutable in pipeline use: build it
// once, then share freely across threads.
template <typename T>
class VolumeGrid {
 public:
  VolumeGrid() = default;

  VolumeGrid(GridGeometry geometry, std::vector<T> values) : geom_(geometry), values_(std::move(values)) {
    geom_.validate();
    if (values_.size() != geom_.voxel_count())
      throw std::invalid_argument("value array length " + std::to_string(values_.size()) +
                                  " does not match voxel count " + std::to_string(geom_.voxel_count()));
  }

  explicit VolumeGrid(GridGeometry geometry, T fill = T{}) : geom_(geometry) {
    geom_.validate();
    values_.assign(geom_.voxel_count(), fill);
  }

  const GridGeometry& geometry() const { return geom_; }
  const Index3& dims() const { return geom_.dims; }
  const Vec3& spacing() const { return geom_.spacing; }
  const Vec3& origin() const { return geom_.origin; }
  std::size_t size() const { return values_.size(); }

  const std::vector<T>& values() const { return values_; }
  std::vector<T>& values() { return values_; }

  T at(int x, int y, int z) const { return values_[geom_.linear_index(x, y, z)]; }
  T& at(int x, int y, int z) { return values_[geom_.linear_index(x, y, z)]; }

  // True when every voxel is 0 or 1, the invariant required of label grids.
  bool is_binary() const {
    for (const T v : values_)
      if (v != T{0} && v != T{1}) return false;
    return true;
  }

 private:
  GridGeometry geom_;
  std::vector<T> values_;
};

struct CenterOfMass {
  Vec3 position{0.0, 0.0, 0.0};  // mm, scanner space
  std::size_t mass = 0;          // contributing voxels
};

// Unweighted mean world position of all value-1 voxels. Empty masks are an
// error; callers decide the policy.
inline CenterOfMass center_of_mass(const VolumeGrid<std::uint8_t>& labels) {
  const GridGeometry& g = labels.geometry();
  double sx = 0.0, sy = 0.0, sz = 0.0;
  std::size_t mass = 0;
  std::size_t idx = 0;
  for (int z = 0; z < g.dims[2]; ++z)
    for (int y = 0; y < g.dims[1]; ++y)
      for (int x = 0; x < g.dims[0]; ++x, ++idx) {
        if (labels.values()[idx]) {
          sx += x;
          sy += y;
          sz += z;
          ++mass;
        }
      }
  if (mass == 0) throw std::domain_error("empty mask: center of mass undefined");
  const double inv = 1.0 / static_cast<double>(mass);
  return {{g.origin[0] + sx * inv * g.spacing[0], g.origin[1] + sy * inv * g.spacing[1],
           g.origin[2] + sz * inv * g.spacing[2]},
          mass};
}

namespace detail {

// Snap continuous voxel coordinates that are within a hair of a lattice node
// onto the node, so lattice-aligned resampling reproduces source values
// exactly despite origin/spacing rounding.
inline double snap_to_node(double c) {
  const double r = std::round(c);
  return (std::abs(c - r) < 1e-6) ? r : c;
}

}  // namespace detail

// Trilinear interpolation of `src` at each voxel center of `target`.
// Positions outside the source voxel-center hull read as 0 (air background).
template <typename T>
VolumeGrid<float> resample_trilinear(const VolumeGrid<T>& src, const GridGeometry& target) {
  target.validate();
  const GridGeometry& sg = src.geometry();

  if (target == sg) {
    // Identity geometry: bit-identical copy.
    std::vector<float> out(src.values().begin(), src.values().end());
    return VolumeGrid<float>(target, std::move(out));
  }

  VolumeGrid<float> out(target, 0.0f);
  const std::vector<T>& sv = src.values();
  const int snx = sg.dims[0], sny = sg.dims[1], snz = sg.dims[2];

  for (int z = 0; z < target.dims[2]; ++z) {
    const double cz = detail::snap_to_node((target.origin[2] + z * target.spacing[2] - sg.origin[2]) / sg.spacing[2]);
    if (cz < 0.0 || cz > snz - 1) continue;
    const int z0 = std::min(static_cast<int>(cz), snz - 1);
    const int z1 = std::min(z0 + 1, snz - 1);
    const double fz = cz - z0;
    for (int y = 0; y < target.dims[1]; ++y) {
      const double cy = detail::snap_to_node((target.origin[1] + y * target.spacing[1] - sg.origin[1]) / sg.spacing[1]);
      if (cy < 0.0 || cy > sny - 1) continue;
      const int y0 = std::min(static_cast<int>(cy), sny - 1);
      const int y1 = std::min(y0 + 1, sny - 1);
      const double fy = cy - y0;
      std::size_t row = target.linear_index(0, y, z);
      for (int x = 0; x < target.dims[0]; ++x, ++row) {
        const double cx = detail::snap_to_node((target.origin[0] + x * target.spacing[0] - sg.origin[0]) / sg.spacing[0]);
        if (cx < 0.0 || cx > snx - 1) continue;
        const int x0 = std::min(static_cast<int>(cx), snx - 1);
        const int x1 = std::min(x0 + 1, snx - 1);
        const double fx = cx - x0;

        const double v000 = sv[sg.linear_index(x0, y0, z0)];
        const double v100 = sv[sg.linear_index(x1, y0, z0)];
        const double v010 = sv[sg.linear_index(x0, y1, z0)];
        const double v110 = sv[sg.linear_index(x1, y1, z0)];
        const double v001 = sv[sg.linear_index(x0, y0, z1)];
        const double v101 = sv[sg.linear_index(x1, y0, z1)];
        const double v011 = sv[sg.linear_index(x0, y1, z1)];
        const double v111 = sv[sg.linear_index(x1, y1, z1)];

        const double c00 = v000 + (v100 - v000) * fx;
        const double c10 = v010 + (v110 - v010) * fx;
        const double c01 = v001 + (v101 - v001) * fx;
        const double c11 = v011 + (v111 - v011) * fx;
        const double c0 = c00 + (c10 - c00) * fy;
        const double c1 = c01 + (c11 - c01) * fy;
        out.values()[row] = static_cast<float>(c0 + (c1 - c0) * fz);
      }
    }
  }
  return out;
}

// Two overlapping breath-hold stations covering the kidneys; station 2 sits
// above station 3 along z.
struct StationPair {
  std::string subject_id;
  VolumeGrid<float> station2;  // upper station
  VolumeGrid<float> station3;  // lower station
};

}  // namespace kvol
