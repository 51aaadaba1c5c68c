#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <stdexcept>
#include <vector>

#include "kvol/grid.hpp"

// Connected-component decomposition of a fused label volume and left/right
// kidney assignment via centers of mass.

namespace kvol {

struct Component {
  std::vector<std::size_t> voxels;  // linear indices, ascending
  std::size_t size = 0;
  CenterOfMass com;
};

struct ComponentSet {
  std::vector<Component> components;  // sorted by size desc, ties by smaller x-COM
  int connectivity = 6;

  std::size_t total_labeled() const {
    std::size_t n = 0;
    for (const auto& c : components) n += c.size;
    return n;
  }
};

namespace detail {

struct NeighborTable {
  int count = 0;
  int dx[26], dy[26], dz[26];
};

inline NeighborTable neighbor_table(int connectivity) {
  if (connectivity != 6 && connectivity != 26)
    throw std::invalid_argument("connectivity must be 6 or 26, got " + std::to_string(connectivity));
  NeighborTable t;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0 && dz == 0) continue;
        const int manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
        if (connectivity == 6 && manhattan != 1) continue;
        t.dx[t.count] = dx;
        t.dy[t.count] = dy;
        t.dz[t.count] = dz;
        ++t.count;
      }
  return t;
}

}  // namespace detail

// Exact partition of the value-1 voxels into maximal connected sets. Output
// order is canonical (independent of visitation order): size descending, then
// smaller x-COM, then smallest member index.
inline ComponentSet connected_components(const VolumeGrid<std::uint8_t>& labels, int connectivity = 6) {
  const detail::NeighborTable nbr = detail::neighbor_table(connectivity);
  const GridGeometry& g = labels.geometry();
  const std::vector<std::uint8_t>& v = labels.values();

  ComponentSet out;
  out.connectivity = connectivity;

  std::vector<std::uint8_t> visited(v.size(), 0);
  std::vector<std::size_t> stack;

  for (std::size_t seed = 0; seed < v.size(); ++seed) {
    if (!v[seed] || visited[seed]) continue;

    Component comp;
    stack.clear();
    stack.push_back(seed);
    visited[seed] = 1;
    double sx = 0.0, sy = 0.0, sz = 0.0;

    while (!stack.empty()) {
      const std::size_t idx = stack.back();
      stack.pop_back();
      comp.voxels.push_back(idx);

      const Index3 p = g.delinearize(idx);
      sx += p[0];
      sy += p[1];
      sz += p[2];

      for (int k = 0; k < nbr.count; ++k) {
        const int x = p[0] + nbr.dx[k];
        const int y = p[1] + nbr.dy[k];
        const int z = p[2] + nbr.dz[k];
        if (x < 0 || x >= g.dims[0] || y < 0 || y >= g.dims[1] || z < 0 || z >= g.dims[2]) continue;
        const std::size_t n = g.linear_index(x, y, z);
        if (v[n] && !visited[n]) {
          visited[n] = 1;
          stack.push_back(n);
        }
      }
    }

    std::sort(comp.voxels.begin(), comp.voxels.end());
    comp.size = comp.voxels.size();
    const double inv = 1.0 / static_cast<double>(comp.size);
    comp.com.position = {g.origin[0] + sx * inv * g.spacing[0], g.origin[1] + sy * inv * g.spacing[1],
                         g.origin[2] + sz * inv * g.spacing[2]};
    comp.com.mass = comp.size;
    out.components.push_back(std::move(comp));
  }

  std::sort(out.components.begin(), out.components.end(), [](const Component& a, const Component& b) {
    if (a.size != b.size) return a.size > b.size;
    if (a.com.position[0] != b.com.position[0]) return a.com.position[0] < b.com.position[0];
    return a.voxels.front() < b.voxels.front();
  });
  return out;
}

// The two largest components with left/right identity and the leftover scrap
// voxel count. Scrap is everything labeled outside those two components.
struct KidneyPair {
  std::optional<Component> left;
  std::optional<Component> right;
  std::size_t scrap_voxels = 0;
  std::size_t total_labeled = 0;
};

// Of the two largest components, the one with greater x-COM lies toward the
// subject's anatomical left. A lone component is assigned by which side of
// the volume midline its COM falls on; the paper's missing-kidney subjects
// land here.
inline KidneyPair split_pair(const ComponentSet& components, double midline_x_mm) {
  KidneyPair pair;
  pair.total_labeled = components.total_labeled();

  const auto& comps = components.components;
  if (comps.empty()) return pair;

  if (comps.size() == 1) {
    if (comps[0].com.position[0] > midline_x_mm)
      pair.left = comps[0];
    else
      pair.right = comps[0];
    return pair;
  }

  if (comps[0].com.position[0] >= comps[1].com.position[0]) {
    pair.left = comps[0];
    pair.right = comps[1];
  } else {
    pair.left = comps[1];
    pair.right = comps[0];
  }
  for (std::size_t i = 2; i < comps.size(); ++i) pair.scrap_voxels += comps[i].size;
  return pair;
}

}  // namespace kvol
