#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "kvol/fusion.hpp"
#include "kvol/grid.hpp"

// Synthetic two-station phantom with analytic ground truth. Kidneys are
// ellipsoids sampled at voxel centers (no partial-volume weighting), so
// ground-truth labels, voxel counts, and the analytic volumes/COMs are exact
// oracles for the downstream pipeline. Artifacts model the real failure
// modes: inter-station motion, spurious bright islands, cysts carved out of
// the kidneys, and missing kidneys.

namespace kvol {

enum class KidneySide { none, left, right };

struct Ellipsoid {
  Vec3 center_mm{0.0, 0.0, 0.0};
  Vec3 semi_axes_mm{30.0, 25.0, 50.0};
  double intensity = 0.9;
};

struct CystSphere {
  Vec3 center_mm{0.0, 0.0, 0.0};
  double radius_mm = 0.0;
};

struct PhantomArtifacts {
  // Whole-voxel shift of the lower station's content (subject motion between
  // breath-holds).
  Index3 motion_shift_voxels{0, 0, 0};
  int island_count = 0;      // spurious bright islands, deterministic placement
  int island_size = 1;       // voxels per island
  std::vector<CystSphere> cysts;
  KidneySide delete_kidney = KidneySide::none;
};

struct PhantomSpec {
  Index3 station_dims{224, 174, 44};
  Vec3 spacing{2.232, 2.232, 4.5};
  int overlap_slices = 18;  // untrimmed stations; the pipeline trims both ends
  int trim_slices = 3;      // trim the downstream pipeline will apply
  std::vector<Ellipsoid> kidneys;
  double background_intensity = 0.1;
  double noise_sigma = 0.0;
  PhantomArtifacts artifacts;
  bool allow_out_of_field = false;  // permit kidneys beyond the trimmed field of view
};

struct KidneyTruth {
  double analytic_cm3 = 0.0;     // 4/3 pi abc minus contained cyst spheres
  Vec3 analytic_com{0.0, 0.0, 0.0};
  std::size_t truth_voxels = 0;  // voxel centers inside the kidney, outside cysts
  Vec3 truth_com{0.0, 0.0, 0.0};  // unweighted mean of those voxel centers
};

struct PhantomResult {
  StationPair stations;
  VolumeGrid<std::uint8_t> truth_labels;  // on the trimmed common grid
  std::vector<KidneyTruth> kidneys;       // order matches the effective kidney list
  std::size_t truth_total_voxels = 0;
  std::size_t island_voxels = 0;          // bright voxels outside the ground truth
};

namespace detail {

inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline double uniform01(std::uint64_t h) { return static_cast<double>((h >> 11) + 1) * 0x1.0p-53; }

// Noise is a deterministic function of (seed, world position), not of the
// sampling order, so both stations see identical values at shared voxel
// centers and phantoms are bit-identical for a given seed.
inline double world_noise(std::uint64_t seed, const Vec3& p, double sigma) {
  if (sigma <= 0.0) return 0.0;
  const auto q = [](double v) { return static_cast<std::uint64_t>(static_cast<std::int64_t>(std::llround(v * 64.0))); };
  std::uint64_t h = mix64(seed ^ q(p[0]));
  h = mix64(h ^ q(p[1]));
  h = mix64(h ^ q(p[2]));
  const double u1 = uniform01(h);
  const double u2 = uniform01(mix64(h ^ 0xD1B54A32D192ED03ULL));
  return sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline double normalized_radius(const Vec3& p, const Ellipsoid& e) {
  const double dx = (p[0] - e.center_mm[0]) / e.semi_axes_mm[0];
  const double dy = (p[1] - e.center_mm[1]) / e.semi_axes_mm[1];
  const double dz = (p[2] - e.center_mm[2]) / e.semi_axes_mm[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

inline bool inside(const Vec3& p, const Ellipsoid& e) { return normalized_radius(p, e) <= 1.0; }

inline bool inside(const Vec3& p, const CystSphere& c) {
  return norm(p - c.center_mm) <= c.radius_mm;
}

}  // namespace detail

inline GridGeometry trimmed_geometry(GridGeometry g, int trim_slices) {
  if (g.dims[2] <= 2 * trim_slices)
    throw std::invalid_argument("station too short for trim of " + std::to_string(trim_slices));
  g.dims[2] -= 2 * trim_slices;
  g.origin[2] += trim_slices * g.spacing[2];
  return g;
}

// Lower station (station 3) anchored at the world origin.
inline GridGeometry station3_geometry(const PhantomSpec& spec) {
  return {spec.station_dims, spec.spacing, {0.0, 0.0, 0.0}};
}

// Upper station (station 2), shifted so the stations share overlap_slices
// axial slices.
inline GridGeometry station2_geometry(const PhantomSpec& spec) {
  GridGeometry g = station3_geometry(spec);
  g.origin[2] = (spec.station_dims[2] - spec.overlap_slices) * spec.spacing[2];
  return g;
}

// Geometry of the ground-truth labeling: the common grid of both trimmed
// stations, i.e. exactly what the pipeline fuses onto.
inline GridGeometry truth_geometry(const PhantomSpec& spec) {
  return common_grid(trimmed_geometry(station2_geometry(spec), spec.trim_slices),
                     trimmed_geometry(station3_geometry(spec), spec.trim_slices));
}

namespace detail {

// Scene shared by both stations: kidneys with carved cysts, optional bright
// islands, flat background. Island positions are keyed to the truth lattice
// so integer-voxel motion moves them consistently.
struct Scene {
  const PhantomSpec* spec = nullptr;
  std::vector<Ellipsoid> kidneys;  // effective list, after delete_kidney
  GridGeometry lattice;            // truth lattice for island keys
  std::unordered_set<std::uint64_t> island_keys;

  std::uint64_t key_of(const Vec3& p) const {
    const std::int64_t kx = std::llround((p[0] - lattice.origin[0]) / lattice.spacing[0]);
    const std::int64_t ky = std::llround((p[1] - lattice.origin[1]) / lattice.spacing[1]);
    const std::int64_t kz = std::llround((p[2] - lattice.origin[2]) / lattice.spacing[2]);
    return (static_cast<std::uint64_t>(kx & 0x1FFFFF) << 42) | (static_cast<std::uint64_t>(ky & 0x1FFFFF) << 21) |
           static_cast<std::uint64_t>(kz & 0x1FFFFF);
  }

  bool on_island(const Vec3& p) const {
    if (island_keys.empty()) return false;
    // Only exact lattice points carry island voxels.
    const std::int64_t kx = std::llround((p[0] - lattice.origin[0]) / lattice.spacing[0]);
    const double rx = std::abs(p[0] - (lattice.origin[0] + kx * lattice.spacing[0]));
    const std::int64_t ky = std::llround((p[1] - lattice.origin[1]) / lattice.spacing[1]);
    const double ry = std::abs(p[1] - (lattice.origin[1] + ky * lattice.spacing[1]));
    const std::int64_t kz = std::llround((p[2] - lattice.origin[2]) / lattice.spacing[2]);
    const double rz = std::abs(p[2] - (lattice.origin[2] + kz * lattice.spacing[2]));
    if (rx > 0.25 * lattice.spacing[0] || ry > 0.25 * lattice.spacing[1] || rz > 0.25 * lattice.spacing[2])
      return false;
    return island_keys.count(key_of(p)) > 0;
  }

  bool in_truth(const Vec3& p) const {
    for (const auto& k : kidneys) {
      if (inside(p, k)) {
        for (const auto& c : spec->artifacts.cysts)
          if (inside(p, c)) return false;
        return true;
      }
    }
    return false;
  }

  double intensity(const Vec3& p) const {
    if (on_island(p)) return island_intensity();
    for (const auto& k : kidneys) {
      if (inside(p, k)) {
        for (const auto& c : spec->artifacts.cysts)
          if (inside(p, c)) return spec->background_intensity;  // cysts read dark
        return k.intensity;
      }
    }
    return spec->background_intensity;
  }

  double island_intensity() const {
    double v = spec->background_intensity;
    for (const auto& k : kidneys) v = std::max(v, k.intensity);
    return v == spec->background_intensity ? spec->background_intensity + 0.8 : v;
  }
};

inline std::vector<Ellipsoid> effective_kidneys(const PhantomSpec& spec, double midline_x) {
  std::vector<Ellipsoid> out;
  for (const auto& k : spec.kidneys) {
    const bool is_left = k.center_mm[0] > midline_x;
    if (spec.artifacts.delete_kidney == KidneySide::left && is_left) continue;
    if (spec.artifacts.delete_kidney == KidneySide::right && !is_left) continue;
    out.push_back(k);
  }
  return out;
}

}  // namespace detail

// Deterministic phantom generation. Ground-truth labels mark voxel centers
// inside any kidney ellipsoid and outside every cyst; islands and noise never
// reach the truth volume.
inline PhantomResult generate(const PhantomSpec& spec, std::uint64_t seed) {
  if (spec.overlap_slices < 0 || spec.overlap_slices >= spec.station_dims[2])
    throw std::invalid_argument("overlap_slices must lie in [0, station nz)");
  for (const auto& k : spec.kidneys) {
    if (!(k.intensity > spec.background_intensity))
      throw std::invalid_argument("kidney intensity must exceed the background intensity");
    for (int a = 0; a < 3; ++a)
      if (!(k.semi_axes_mm[a] > 0.0)) throw std::invalid_argument("kidney semi-axes must be positive");
  }

  const GridGeometry g2 = station2_geometry(spec);
  const GridGeometry g3 = station3_geometry(spec);
  const GridGeometry truth_geom = truth_geometry(spec);

  // Field-of-view check against the trimmed union (what the pipeline sees).
  if (!spec.allow_out_of_field) {
    for (std::size_t i = 0; i < spec.kidneys.size(); ++i) {
      const auto& k = spec.kidneys[i];
      for (int a = 0; a < 3; ++a) {
        const double lo_edge = truth_geom.origin[a] - 0.5 * truth_geom.spacing[a];
        const double hi_edge = truth_geom.top_corner()[a] + 0.5 * truth_geom.spacing[a];
        if (k.center_mm[a] - k.semi_axes_mm[a] < lo_edge - 1e-9 ||
            k.center_mm[a] + k.semi_axes_mm[a] > hi_edge + 1e-9)
          throw std::invalid_argument("kidney " + std::to_string(i) + " extends outside the trimmed field of view on axis " +
                                      axis_name(a) + " (set allow_out_of_field to permit)");
      }
    }
  }

  detail::Scene scene;
  scene.spec = &spec;
  scene.lattice = truth_geom;
  scene.kidneys = detail::effective_kidneys(spec, truth_geom.mid_world(0));

  // Cysts must sit entirely inside a kidney so the analytic volumes stay
  // closed-form.
  for (const auto& c : spec.artifacts.cysts) {
    bool contained = false;
    for (const auto& k : scene.kidneys) {
      const double min_semi = std::min({k.semi_axes_mm[0], k.semi_axes_mm[1], k.semi_axes_mm[2]});
      if (detail::normalized_radius(c.center_mm, k) + c.radius_mm / min_semi <= 1.0) {
        contained = true;
        break;
      }
    }
    if (!contained && !scene.kidneys.empty())
      throw std::invalid_argument("cyst sphere is not fully contained in a kidney");
  }

  // Deterministic island placement on the truth lattice, with a 2-voxel
  // margin from the volume border, the kidneys, and other islands.
  std::vector<Index3> island_cells;
  if (spec.artifacts.island_count > 0) {
    const int side = std::max(1, static_cast<int>(std::ceil(std::cbrt(static_cast<double>(spec.artifacts.island_size)))));
    int placed = 0;
    std::uint64_t attempt = 0;
    while (placed < spec.artifacts.island_count) {
      if (++attempt > 200000) throw std::runtime_error("could not place phantom islands; spec too crowded");
      std::uint64_t h = detail::mix64(seed ^ detail::mix64(0xA11A5ULL + attempt));
      Index3 anchor;
      bool ok = true;
      for (int a = 0; a < 3; ++a) {
        const int margin = 2;
        const int lo = margin;
        const int hi = truth_geom.dims[a] - margin - side;
        if (hi < lo) {
          ok = false;
          break;
        }
        anchor[a] = lo + static_cast<int>(h % static_cast<std::uint64_t>(hi - lo + 1));
        h = detail::mix64(h);
      }
      if (!ok) throw std::runtime_error("phantom volume too small for island placement");

      // Keep islands clear of kidneys (expanded by two voxels) and of each
      // other.
      const Vec3 w = truth_geom.voxel_to_world(anchor);
      for (const auto& k : spec.kidneys) {
        Ellipsoid grown = k;
        for (int a = 0; a < 3; ++a) grown.semi_axes_mm[a] += 2.0 * truth_geom.spacing[a] + side * truth_geom.spacing[a];
        if (detail::inside(w, grown)) {
          ok = false;
          break;
        }
      }
      for (const auto& other : island_cells) {
        if (std::abs(other[0] - anchor[0]) <= side + 2 && std::abs(other[1] - anchor[1]) <= side + 2 &&
            std::abs(other[2] - anchor[2]) <= side + 2) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;

      island_cells.push_back(anchor);
      int remaining = spec.artifacts.island_size;
      for (int dz = 0; dz < side && remaining > 0; ++dz)
        for (int dy = 0; dy < side && remaining > 0; ++dy)
          for (int dx = 0; dx < side && remaining > 0; ++dx, --remaining) {
            const Vec3 p = truth_geom.voxel_to_world({anchor[0] + dx, anchor[1] + dy, anchor[2] + dz});
            scene.island_keys.insert(scene.key_of(p));
          }
      ++placed;
    }
  }

  // Sample the stations. The lower station reads the scene displaced by the
  // motion shift, emulating subject movement between the two breath-holds.
  const Vec3 shift = {spec.artifacts.motion_shift_voxels[0] * spec.spacing[0],
                      spec.artifacts.motion_shift_voxels[1] * spec.spacing[1],
                      spec.artifacts.motion_shift_voxels[2] * spec.spacing[2]};

  const auto sample_station = [&](const GridGeometry& g, bool shifted) {
    VolumeGrid<float> img(g);
    std::size_t idx = 0;
    for (int z = 0; z < g.dims[2]; ++z)
      for (int y = 0; y < g.dims[1]; ++y)
        for (int x = 0; x < g.dims[0]; ++x, ++idx) {
          Vec3 p = g.voxel_to_world({x, y, z});
          if (shifted) p = p - shift;
          img.values()[idx] = static_cast<float>(scene.intensity(p) + detail::world_noise(seed, p, spec.noise_sigma));
        }
    return img;
  };

  PhantomResult result;
  result.stations.subject_id = "phantom";
  result.stations.station2 = sample_station(g2, false);
  result.stations.station3 = sample_station(g3, true);

  // Ground truth on the trimmed common grid.
  VolumeGrid<std::uint8_t> truth(truth_geom);
  result.kidneys.resize(scene.kidneys.size());
  std::vector<Vec3> com_sums(scene.kidneys.size(), Vec3{0.0, 0.0, 0.0});
  {
    std::size_t idx = 0;
    for (int z = 0; z < truth_geom.dims[2]; ++z)
      for (int y = 0; y < truth_geom.dims[1]; ++y)
        for (int x = 0; x < truth_geom.dims[0]; ++x, ++idx) {
          const Vec3 p = truth_geom.voxel_to_world({x, y, z});
          for (std::size_t ki = 0; ki < scene.kidneys.size(); ++ki) {
            if (detail::inside(p, scene.kidneys[ki])) {
              bool carved = false;
              for (const auto& c : spec.artifacts.cysts)
                if (detail::inside(p, c)) {
                  carved = true;
                  break;
                }
              if (!carved) {
                truth.values()[idx] = 1;
                ++result.kidneys[ki].truth_voxels;
                ++result.truth_total_voxels;
                com_sums[ki] = com_sums[ki] + p;
              }
              break;
            }
          }
        }
  }
  for (std::size_t ki = 0; ki < scene.kidneys.size(); ++ki)
    if (result.kidneys[ki].truth_voxels > 0)
      result.kidneys[ki].truth_com = com_sums[ki] * (1.0 / static_cast<double>(result.kidneys[ki].truth_voxels));
  result.truth_labels = std::move(truth);
  result.island_voxels = scene.island_keys.size();

  // Analytic volumes and centers of mass; cysts subtract their full sphere
  // from the kidney containing them.
  for (std::size_t ki = 0; ki < scene.kidneys.size(); ++ki) {
    const auto& k = scene.kidneys[ki];
    const double ve = 4.0 / 3.0 * std::numbers::pi * k.semi_axes_mm[0] * k.semi_axes_mm[1] * k.semi_axes_mm[2];
    double v = ve;
    Vec3 moment = k.center_mm * ve;
    for (const auto& c : spec.artifacts.cysts) {
      if (detail::inside(c.center_mm, k)) {
        const double vc = 4.0 / 3.0 * std::numbers::pi * c.radius_mm * c.radius_mm * c.radius_mm;
        v -= vc;
        moment = moment - c.center_mm * vc;
      }
    }
    result.kidneys[ki].analytic_cm3 = v / 1000.0;
    result.kidneys[ki].analytic_com = moment * (1.0 / v);
  }

  return result;
}

// Perfect per-station segmentation of the phantom content: membership of the
// (possibly motion-shifted) kidneys on the trimmed station grid. Used to
// exercise the external-mask import path.
inline VolumeGrid<std::uint8_t> station_truth_mask(const PhantomSpec& spec, int station_index) {
  if (station_index != 2 && station_index != 3)
    throw std::invalid_argument("station index must be 2 or 3");
  const GridGeometry g =
      trimmed_geometry(station_index == 2 ? station2_geometry(spec) : station3_geometry(spec), spec.trim_slices);
  const GridGeometry truth_geom = truth_geometry(spec);
  const std::vector<Ellipsoid> kidneys = detail::effective_kidneys(spec, truth_geom.mid_world(0));
  const bool shifted = station_index == 3;
  const Vec3 shift = {spec.artifacts.motion_shift_voxels[0] * spec.spacing[0],
                      spec.artifacts.motion_shift_voxels[1] * spec.spacing[1],
                      spec.artifacts.motion_shift_voxels[2] * spec.spacing[2]};

  VolumeGrid<std::uint8_t> mask(g);
  std::size_t idx = 0;
  for (int z = 0; z < g.dims[2]; ++z)
    for (int y = 0; y < g.dims[1]; ++y)
      for (int x = 0; x < g.dims[0]; ++x, ++idx) {
        Vec3 p = g.voxel_to_world({x, y, z});
        if (shifted) p = p - shift;
        for (const auto& k : kidneys) {
          if (detail::inside(p, k)) {
            bool carved = false;
            for (const auto& c : spec.artifacts.cysts)
              if (detail::inside(p, c)) {
                carved = true;
                break;
              }
            if (!carved) mask.values()[idx] = 1;
            break;
          }
        }
      }
  return mask;
}

// ---------------------------------------------------------------------------
// Synthetic cohorts: deterministic per-subject variation plus a configurable
// number of artifact subjects, for desk-scale pipeline and flagging tests.

struct CohortArtifactCounts {
  int motion = 0;
  int islands = 0;
  int cysts = 0;
  int missing_kidney = 0;
  int location_shift = 0;
};

struct CohortOptions {
  int subjects = 100;
  std::uint64_t seed = 1;
  Index3 station_dims{40, 34, 16};
  Vec3 spacing{4.0, 4.0, 6.0};
  int overlap_slices = 10;
  int trim_slices = 3;
  double noise_sigma = 0.004;
  CohortArtifactCounts artifacts;
};

enum class CohortArtifactKind { none, motion, islands, cysts, missing_kidney, location_shift };

inline const char* to_string(CohortArtifactKind k) {
  switch (k) {
    case CohortArtifactKind::none: return "none";
    case CohortArtifactKind::motion: return "motion";
    case CohortArtifactKind::islands: return "islands";
    case CohortArtifactKind::cysts: return "cysts";
    case CohortArtifactKind::missing_kidney: return "missing_kidney";
    case CohortArtifactKind::location_shift: return "location_shift";
  }
  return "none";
}

inline std::string cohort_subject_id(int index) {
  std::string n = std::to_string(index);
  return "S" + std::string(6 - std::min<std::size_t>(6, n.size()), '0') + n;
}

// Artifact kind of one cohort subject: artifact subjects are scattered over
// the cohort by a seed-keyed permutation.
inline CohortArtifactKind cohort_artifact_kind(const CohortOptions& opts, int index) {
  const auto& a = opts.artifacts;
  const int total = a.motion + a.islands + a.cysts + a.missing_kidney + a.location_shift;
  if (total == 0) return CohortArtifactKind::none;
  if (total > opts.subjects) throw std::invalid_argument("more artifact subjects requested than cohort size");

  // Rank of this index in the seed-keyed permutation.
  const auto rank_key = [&](int i) { return detail::mix64(opts.seed ^ detail::mix64(0xC0403ULL + static_cast<std::uint64_t>(i))); };
  const std::uint64_t mine = rank_key(index);
  int rank = 0;
  for (int i = 0; i < opts.subjects; ++i) {
    const std::uint64_t k = rank_key(i);
    if (k < mine || (k == mine && i < index)) ++rank;
  }
  if (rank < a.motion) return CohortArtifactKind::motion;
  if (rank < a.motion + a.islands) return CohortArtifactKind::islands;
  if (rank < a.motion + a.islands + a.cysts) return CohortArtifactKind::cysts;
  if (rank < a.motion + a.islands + a.cysts + a.missing_kidney) return CohortArtifactKind::missing_kidney;
  if (rank < total) return CohortArtifactKind::location_shift;
  return CohortArtifactKind::none;
}

// Deterministic spec for one cohort subject: kidney geometry varies smoothly
// with the subject index, artifacts vary in severity.
inline PhantomSpec cohort_subject_spec(const CohortOptions& opts, int index) {
  if (index < 0 || index >= opts.subjects) throw std::out_of_range("cohort subject index out of range");

  PhantomSpec spec;
  spec.station_dims = opts.station_dims;
  spec.spacing = opts.spacing;
  spec.overlap_slices = opts.overlap_slices;
  spec.trim_slices = opts.trim_slices;
  spec.noise_sigma = opts.noise_sigma;

  const GridGeometry truth = truth_geometry(spec);
  const double mid_x = truth.mid_world(0);
  const double mid_y = truth.mid_world(1);
  const double mid_z = truth.mid_world(2);
  const double ext_x = truth.extent_mm(0);
  const double ext_y = truth.extent_mm(1);
  const double ext_z = truth.extent_mm(2);

  const auto u = [&](std::uint64_t salt) {
    return detail::uniform01(detail::mix64(opts.seed ^ detail::mix64(salt + 977ULL * static_cast<std::uint64_t>(index))));
  };

  const double separation = 0.18 * ext_x * (1.0 + 0.2 * u(11));
  const double sa = std::min(0.12 * ext_x, 0.45 * separation) * (0.85 + 0.3 * u(12));
  const double sb = std::min(0.14 * ext_y, sa * 1.1) * (0.85 + 0.3 * u(13));
  const double sc = std::min(0.22 * ext_z, 0.3 * ext_z) * (0.8 + 0.3 * u(14));
  const double dz = (u(15) - 0.5) * (0.5 * ext_z - sc - opts.spacing[2]);

  Ellipsoid left;
  left.center_mm = {mid_x + separation, mid_y + 0.05 * ext_y * (u(16) - 0.5), mid_z + dz};
  left.semi_axes_mm = {sa, sb, sc};
  Ellipsoid right = left;
  right.center_mm[0] = mid_x - separation * (1.0 + 0.05 * (u(17) - 0.5));
  right.center_mm[2] = mid_z + dz + 0.02 * ext_z * (u(18) - 0.5);
  spec.kidneys = {left, right};

  const CohortArtifactKind kind = cohort_artifact_kind(opts, index);
  switch (kind) {
    case CohortArtifactKind::none:
      break;
    case CohortArtifactKind::motion: {
      const int severity = 1 + static_cast<int>(u(21) * 3.999);  // 1..4 voxels along z
      spec.artifacts.motion_shift_voxels = {0, 0, severity};
      break;
    }
    case CohortArtifactKind::islands: {
      spec.artifacts.island_count = 2 + static_cast<int>(u(22) * 4.0);  // 2..5 islands
      spec.artifacts.island_size = 1 + static_cast<int>(u(23) * 2.0);   // 1..2 voxels each
      break;
    }
    case CohortArtifactKind::cysts: {
      CystSphere cyst;
      const double r = 0.45 * std::min({sa, sb, sc}) * (0.8 + 0.4 * u(24));
      cyst.center_mm = left.center_mm;
      cyst.radius_mm = r;
      spec.artifacts.cysts.push_back(cyst);
      break;
    }
    case CohortArtifactKind::missing_kidney:
      spec.artifacts.delete_kidney = (u(25) < 0.5) ? KidneySide::left : KidneySide::right;
      break;
    case CohortArtifactKind::location_shift: {
      // Push both kidneys against the top retained slice; the labeled
      // bounding box then touches the border, the genuine location-flag case.
      const double top_edge = truth.top_corner()[2] + 0.5 * truth.spacing[2];
      for (auto& k : spec.kidneys) k.center_mm[2] = top_edge - k.semi_axes_mm[2] + 2.0 * truth.spacing[2];
      spec.allow_out_of_field = true;
      break;
    }
  }
  return spec;
}

// Per-subject generation seed, independent of artifact assignment.
inline std::uint64_t cohort_subject_seed(const CohortOptions& opts, int index) {
  return detail::mix64(opts.seed ^ detail::mix64(0x5EEDULL + static_cast<std::uint64_t>(index)));
}

}  // namespace kvol
