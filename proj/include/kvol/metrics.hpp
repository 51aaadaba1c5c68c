#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "kvol/grid.hpp"

// Mask agreement (Dice, Jaccard) and paired-measurement agreement (MAE,
// SMAPE, R^2, 95% limits of agreement). Mask metrics take fused grids: they
// are meaningful only after station fusion, never per station.

namespace kvol {

namespace detail {

inline void require_same_geometry(const VolumeGrid<std::uint8_t>& a, const VolumeGrid<std::uint8_t>& b) {
  if (a.geometry() != b.geometry())
    throw std::invalid_argument("mask geometry mismatch: metrics require identical dims, spacing, and origin");
}

struct OverlapCounts {
  std::size_t inter = 0;
  std::size_t only_a = 0;
  std::size_t only_b = 0;
};

inline OverlapCounts overlap_counts(const VolumeGrid<std::uint8_t>& a, const VolumeGrid<std::uint8_t>& b) {
  require_same_geometry(a, b);
  OverlapCounts c;
  const auto& va = a.values();
  const auto& vb = b.values();
  for (std::size_t i = 0; i < va.size(); ++i) {
    if (va[i] && vb[i])
      ++c.inter;
    else if (va[i])
      ++c.only_a;
    else if (vb[i])
      ++c.only_b;
  }
  return c;
}

}  // namespace detail

// Sørensen-Dice coefficient, 2|A∩B| / (|A|+|B|). Two empty masks agree on
// nothing and score 1.
inline double dice(const VolumeGrid<std::uint8_t>& a, const VolumeGrid<std::uint8_t>& b) {
  const auto c = detail::overlap_counts(a, b);
  const std::size_t denom = 2 * c.inter + c.only_a + c.only_b;
  if (denom == 0) return 1.0;
  return 2.0 * static_cast<double>(c.inter) / static_cast<double>(denom);
}

// Jaccard index, |A∩B| / |A∪B|; related to Dice by J = D / (2 - D).
inline double jaccard(const VolumeGrid<std::uint8_t>& a, const VolumeGrid<std::uint8_t>& b) {
  const auto c = detail::overlap_counts(a, b);
  const std::size_t uni = c.inter + c.only_a + c.only_b;
  if (uni == 0) return 1.0;
  return static_cast<double>(c.inter) / static_cast<double>(uni);
}

struct PairedEntry {
  std::string subject_id;
  double reference = 0.0;
  double predicted = 0.0;
};

struct PairedSeries {
  std::vector<PairedEntry> entries;
};

struct AgreementSummary {
  std::size_t n = 0;
  double mae = 0.0;
  double smape_pct = 0.0;
  double r2 = 0.0;  // NaN when the reference has zero variance
  double mean_diff = 0.0;
  double loa_low = 0.0;
  double loa_high = 0.0;
};

namespace detail {

inline void require_unique_ids(const PairedSeries& series) {
  std::unordered_set<std::string> seen;
  for (const auto& e : series.entries)
    if (!seen.insert(e.subject_id).second)
      throw std::invalid_argument("duplicate subject_id in paired series: " + e.subject_id);
}

}  // namespace detail

inline double mean_absolute_error(const PairedSeries& series) {
  if (series.entries.empty()) throw std::invalid_argument("empty paired series");
  double sum = 0.0;
  for (const auto& e : series.entries) sum += std::abs(e.reference - e.predicted);
  return sum / static_cast<double>(series.entries.size());
}

// Symmetric mean absolute percentage error: per-pair absolute difference over
// the mean of reference and prediction, averaged, in percent. Pairs summing
// to zero contribute zero.
inline double smape_percent(const PairedSeries& series) {
  if (series.entries.empty()) throw std::invalid_argument("empty paired series");
  double sum = 0.0;
  for (const auto& e : series.entries) {
    const double denom = 0.5 * (e.reference + e.predicted);
    if (denom != 0.0) sum += std::abs(e.reference - e.predicted) / denom;
  }
  return 100.0 * sum / static_cast<double>(series.entries.size());
}

// Full agreement summary. Differences follow the (reference - predicted)
// convention, so oversegmentation shifts the limits of agreement negative.
inline AgreementSummary agreement(const PairedSeries& series) {
  const std::size_t n = series.entries.size();
  if (n < 2) throw std::invalid_argument("agreement requires at least 2 paired entries, got " + std::to_string(n));
  detail::require_unique_ids(series);

  AgreementSummary s;
  s.n = n;
  s.mae = mean_absolute_error(series);
  s.smape_pct = smape_percent(series);

  double mean_ref = 0.0, mean_d = 0.0;
  for (const auto& e : series.entries) {
    mean_ref += e.reference;
    mean_d += e.reference - e.predicted;
  }
  mean_ref /= static_cast<double>(n);
  mean_d /= static_cast<double>(n);
  s.mean_diff = mean_d;

  double ss_res = 0.0, ss_tot = 0.0, ss_d = 0.0;
  for (const auto& e : series.entries) {
    const double d = e.reference - e.predicted;
    ss_res += d * d;
    ss_tot += (e.reference - mean_ref) * (e.reference - mean_ref);
    ss_d += (d - mean_d) * (d - mean_d);
  }

  // Coefficient of determination about the reference mean (not squared
  // Pearson correlation).
  s.r2 = (ss_tot > 0.0) ? 1.0 - ss_res / ss_tot : std::numeric_limits<double>::quiet_NaN();

  const double sd = std::sqrt(ss_d / static_cast<double>(n - 1));
  s.loa_low = mean_d - 1.96 * sd;
  s.loa_high = mean_d + 1.96 * sd;
  return s;
}

}  // namespace kvol
