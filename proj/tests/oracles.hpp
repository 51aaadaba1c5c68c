#pragma once

// Test-only oracles, written independently of the library implementations
// they check: a pointwise scalar trilinear interpolator, a full-sort
// quantile, a naive flood fill, union-extent arithmetic, and the agreement
// formulas evaluated directly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <queue>
#include <vector>

#include "kvol/grid.hpp"

namespace oracle {

// Scalar trilinear interpolation of a grid at one world position, evaluated
// from first principles; 0 outside the voxel-center hull.
template <typename T>
double trilinear_at(const kvol::VolumeGrid<T>& grid, const kvol::Vec3& p) {
  const kvol::GridGeometry& g = grid.geometry();
  double c[3];
  for (int a = 0; a < 3; ++a) {
    c[a] = (p[a] - g.origin[a]) / g.spacing[a];
    if (c[a] < -1e-9 || c[a] > g.dims[a] - 1 + 1e-9) return 0.0;
    c[a] = std::clamp(c[a], 0.0, static_cast<double>(g.dims[a] - 1));
  }
  const int x0 = static_cast<int>(std::floor(c[0]));
  const int y0 = static_cast<int>(std::floor(c[1]));
  const int z0 = static_cast<int>(std::floor(c[2]));
  double value = 0.0;
  for (int dz = 0; dz <= 1; ++dz)
    for (int dy = 0; dy <= 1; ++dy)
      for (int dx = 0; dx <= 1; ++dx) {
        const int x = std::min(x0 + dx, g.dims[0] - 1);
        const int y = std::min(y0 + dy, g.dims[1] - 1);
        const int z = std::min(z0 + dz, g.dims[2] - 1);
        const double wx = dx ? c[0] - x0 : 1.0 - (c[0] - x0);
        const double wy = dy ? c[1] - y0 : 1.0 - (c[1] - y0);
        const double wz = dz ? c[2] - z0 : 1.0 - (c[2] - z0);
        value += wx * wy * wz * static_cast<double>(grid.at(x, y, z));
      }
  return value;
}

// Nearest-rank quantile by full sort: the smallest value whose rank reaches
// ceil(q * n).
inline float quantile_by_sort(std::vector<float> values, double q) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  std::size_t rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
  rank = std::min(std::max<std::size_t>(rank, 1), n);
  return values[rank - 1];
}

// Naive BFS flood fill returning per-voxel component ids (0 = background).
inline std::vector<int> flood_fill_labels(const kvol::VolumeGrid<std::uint8_t>& grid, int connectivity) {
  const kvol::GridGeometry& g = grid.geometry();
  std::vector<int> labels(grid.size(), 0);
  int next_label = 0;
  for (std::size_t seed = 0; seed < grid.size(); ++seed) {
    if (!grid.values()[seed] || labels[seed]) continue;
    ++next_label;
    std::queue<std::size_t> frontier;
    frontier.push(seed);
    labels[seed] = next_label;
    while (!frontier.empty()) {
      const std::size_t idx = frontier.front();
      frontier.pop();
      const kvol::Index3 p = g.delinearize(idx);
      for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
            if (manhattan == 0) continue;
            if (connectivity == 6 && manhattan != 1) continue;
            const int x = p[0] + dx, y = p[1] + dy, z = p[2] + dz;
            if (x < 0 || x >= g.dims[0] || y < 0 || y >= g.dims[1] || z < 0 || z >= g.dims[2]) continue;
            const std::size_t n = g.linear_index(x, y, z);
            if (grid.values()[n] && !labels[n]) {
              labels[n] = next_label;
              frontier.push(n);
            }
          }
    }
  }
  return labels;
}

// Union-extent arithmetic for the common grid, written independently.
inline kvol::GridGeometry union_geometry(const kvol::GridGeometry& a, const kvol::GridGeometry& b) {
  kvol::GridGeometry out;
  for (int axis = 0; axis < 3; ++axis) {
    const double a_hi = a.origin[axis] + (a.dims[axis] - 1) * a.spacing[axis];
    const double b_hi = b.origin[axis] + (b.dims[axis] - 1) * b.spacing[axis];
    out.spacing[axis] = std::min(a.spacing[axis], b.spacing[axis]);
    out.origin[axis] = std::min(a.origin[axis], b.origin[axis]);
    const double hi = std::max(a_hi, b_hi);
    int n = 1;
    while (out.origin[axis] + n * out.spacing[axis] <= hi + 1e-6 * out.spacing[axis]) ++n;
    // n now counts the first center beyond the union top; check whether the
    // previous center already reaches it.
    if (out.origin[axis] + (n - 1) * out.spacing[axis] < hi - 1e-6 * out.spacing[axis]) ++n;
    out.dims[axis] = n;
  }
  return out;
}

struct AgreementOracle {
  double mae = 0.0;
  double smape_pct = 0.0;
  double r2 = 0.0;
  double mean_diff = 0.0;
  double loa_low = 0.0;
  double loa_high = 0.0;
};

inline AgreementOracle agreement_by_formula(const std::vector<double>& ref, const std::vector<double>& pred) {
  const std::size_t n = ref.size();
  AgreementOracle o;
  for (std::size_t i = 0; i < n; ++i) {
    o.mae += std::abs(ref[i] - pred[i]);
    const double half_sum = (ref[i] + pred[i]) / 2.0;
    if (half_sum != 0.0) o.smape_pct += std::abs(ref[i] - pred[i]) / half_sum;
    o.mean_diff += ref[i] - pred[i];
  }
  o.mae /= static_cast<double>(n);
  o.smape_pct = 100.0 * o.smape_pct / static_cast<double>(n);
  o.mean_diff /= static_cast<double>(n);

  double mean_ref = 0.0;
  for (const double r : ref) mean_ref += r;
  mean_ref /= static_cast<double>(n);
  double ss_res = 0.0, ss_tot = 0.0, var_d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ss_res += (ref[i] - pred[i]) * (ref[i] - pred[i]);
    ss_tot += (ref[i] - mean_ref) * (ref[i] - mean_ref);
    const double d = ref[i] - pred[i];
    var_d += (d - o.mean_diff) * (d - o.mean_diff);
  }
  o.r2 = 1.0 - ss_res / ss_tot;
  const double sd = std::sqrt(var_d / static_cast<double>(n - 1));
  o.loa_low = o.mean_diff - 1.96 * sd;
  o.loa_high = o.mean_diff + 1.96 * sd;
  return o;
}

inline double ellipsoid_volume_cm3(double a_mm, double b_mm, double c_mm) {
  return 4.0 / 3.0 * std::numbers::pi * a_mm * b_mm * c_mm / 1000.0;
}

}  // namespace oracle
