#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "kvol/components.hpp"
#include "kvol/config.hpp"
#include "kvol/csv.hpp"
#include "kvol/fusion.hpp"
#include "kvol/grid.hpp"
#include "kvol/manifest.hpp"
#include "kvol/measure.hpp"
#include "kvol/metrics.hpp"
#include "kvol/preprocess.hpp"
#include "kvol/qc.hpp"
#include "kvol/segment.hpp"
#include "kvol/volume_io.hpp"

// Cohort orchestration: per-subject pipeline (trim, segment, fuse, connected
// components, measure, quality-rate), batch execution over a manifest with a
// bounded worker pool, two-stage flagging, and the report writers. Subject
// failures become structured rows; they never abort the cohort run. Outputs
// are sorted and reproducible regardless of worker count.

namespace kvol {

struct SubjectResult {
  MeasurementRecord measurement;
  QualityReport quality;
};

struct FailureRow {
  std::string subject_id;
  std::string stage;  // load, trim, segment, fuse, components, measure, qc
  std::string message;
};

// Runs the full single-subject pipeline on in-memory stations. Optional
// pre-loaded masks (trimmed-station geometry) override the configured
// segmenter.
inline SubjectResult run_subject(const StationPair& input, const RunConfig& config,
                                 const std::optional<VolumeGrid<std::uint8_t>>& mask2 = {},
                                 const std::optional<VolumeGrid<std::uint8_t>>& mask3 = {}) {
  config.validate();

  const VolumeGrid<float> trimmed2 = trim_station(input.station2, config.trim_slices);
  const VolumeGrid<float> trimmed3 = trim_station(input.station3, config.trim_slices);

  const VolumeGrid<std::uint8_t> labels2 =
      mask2 ? adopt_external_mask(trimmed2, *mask2)
            : segment_station(trimmed2, config.segmenter, input.subject_id, 2);
  const VolumeGrid<std::uint8_t> labels3 =
      mask3 ? adopt_external_mask(trimmed3, *mask3)
            : segment_station(trimmed3, config.segmenter, input.subject_id, 3);

  const FusedVolume fused = fuse(trimmed2, trimmed3, labels2, labels3);

  const ComponentSet components = connected_components(fused.labels, config.connectivity);
  const KidneyPair pair = split_pair(components, fused.labels.geometry().mid_world(0));

  SubjectResult result;
  result.measurement = measure_subject(input.subject_id, pair, fused.labels.geometry().spacing);

  QualityReport& q = result.quality;
  q.subject_id = input.subject_id;
  const FusionCost img_cost = image_fusion_cost(trimmed2, trimmed3, fused.overlap);
  q.image_fusion_raw = img_cost.raw;
  q.image_fusion = img_cost.per_voxel;
  const FusionCost seg_cost = segmentation_fusion_cost(labels2, labels3, fused.overlap);
  q.segmentation_fusion_raw = seg_cost.raw;
  q.segmentation_fusion = seg_cost.per_voxel;
  const LocationCost loc = location_cost(fused.labels);
  q.location = loc.value;
  q.empty_segmentation = loc.empty_labels;
  const SmoothnessCost smooth = smoothness_cost(fused.labels);
  q.smoothness_raw = smooth.raw;
  q.smoothness = smooth.normalized;
  q.scrap = scrap_cost(pair);

  // Does the labeled bounding box touch the first or last retained slice?
  const GridGeometry& fg = fused.labels.geometry();
  const std::size_t plane = static_cast<std::size_t>(fg.dims[0]) * fg.dims[1];
  const auto slice_has_labels = [&](int z) {
    const std::size_t base = plane * static_cast<std::size_t>(z);
    for (std::size_t i = base; i < base + plane; ++i)
      if (fused.labels.values()[i]) return true;
    return false;
  };
  q.bbox_touches_z = slice_has_labels(0) || slice_has_labels(fg.dims[2] - 1);

  return result;
}

// Outcome of one manifest row: either a result or a structured failure.
struct RowOutcome {
  std::optional<SubjectResult> result;
  std::optional<FailureRow> failure;
};

inline RowOutcome run_subject_row(const ManifestRow& row, const RunConfig& config) {
  std::string stage = "load";
  try {
    StationPair input;
    input.subject_id = row.subject_id;
    input.station2 = load_intensity_volume(row.station2);
    input.station3 = load_intensity_volume(row.station3);

    std::optional<VolumeGrid<std::uint8_t>> mask2, mask3;
    if (row.mask2) {
      stage = "segment";
      mask2 = load_label_volume(*row.mask2);
    }
    if (row.mask3) {
      stage = "segment";
      mask3 = load_label_volume(*row.mask3);
    }

    stage = "pipeline";
    return {run_subject(input, config, mask2, mask3), std::nullopt};
  } catch (const std::exception& e) {
    return {std::nullopt, FailureRow{row.subject_id, stage, e.what()}};
  }
}

struct CohortCounts {
  std::size_t processed = 0;  // successful subject rows
  std::size_t failed = 0;
  std::size_t stage1_flagged = 0;
  std::size_t stage2_flagged = 0;
  std::size_t surviving = 0;
};

struct CohortReport {
  std::vector<MeasurementRecord> measurements;  // sorted by subject_id
  std::vector<QualityReport> quality;           // same order
  std::vector<FailureRow> failures;             // sorted by subject_id
  CohortCounts counts;
  std::string config_hash;
  std::string started_at;
  std::string finished_at;
};

namespace detail {

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Every referenced input must resolve before any work starts.
inline void verify_inputs(const Manifest& manifest, const RunConfig& config) {
  std::vector<std::string> missing;
  const auto check = [&missing](const std::filesystem::path& p) {
    if (!std::filesystem::exists(p)) missing.push_back(p.string());
  };
  for (const auto& row : manifest.rows) {
    check(row.station2);
    check(row.station3);
    if (row.mask2) check(*row.mask2);
    if (row.mask3) check(*row.mask3);
    if (config.segmenter.kind == SegmenterKind::external_masks) {
      try {
        if (!row.mask2) resolve_mask_path(config.segmenter.mask_dir, row.subject_id, 2);
        if (!row.mask3) resolve_mask_path(config.segmenter.mask_dir, row.subject_id, 3);
      } catch (const std::exception& e) {
        missing.push_back(e.what());
      }
    }
  }
  if (!missing.empty()) {
    std::string msg = "manifest references unresolvable inputs:";
    const std::size_t shown = std::min<std::size_t>(missing.size(), 10);
    for (std::size_t i = 0; i < shown; ++i) msg += "\n  " + missing[i];
    if (missing.size() > shown) msg += "\n  ... and " + std::to_string(missing.size() - shown) + " more";
    throw std::runtime_error(msg);
  }
}

}  // namespace detail

// Processes every manifest row (subject-level parallelism), then applies the
// two-stage flagging over the successful rows. Reports are sorted by subject
// id, so the output is identical for any worker count.
inline CohortReport run_cohort(const Manifest& manifest, const RunConfig& config, int workers = 1) {
  if (manifest.rows.empty()) throw std::invalid_argument("cohort manifest is empty");
  config.validate();
  detail::verify_inputs(manifest, config);

  CohortReport report;
  report.started_at = detail::utc_timestamp();
  report.config_hash = config_hash(config);

  std::vector<RowOutcome> outcomes(manifest.rows.size());
  const int worker_count = std::clamp(workers, 1, 64);
  std::atomic<std::size_t> next{0};
  const auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= manifest.rows.size()) return;
      outcomes[i] = run_subject_row(manifest.rows[i], config);
    }
  };
  if (worker_count == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(worker_count);
    for (int t = 0; t < worker_count; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::vector<std::size_t> ok_order, fail_order;
  for (std::size_t i = 0; i < outcomes.size(); ++i)
    (outcomes[i].result ? ok_order : fail_order).push_back(i);
  const auto by_id = [&](std::size_t a, std::size_t b) {
    return manifest.rows[a].subject_id < manifest.rows[b].subject_id;
  };
  std::sort(ok_order.begin(), ok_order.end(), by_id);
  std::sort(fail_order.begin(), fail_order.end(), by_id);

  for (const std::size_t i : ok_order) {
    report.measurements.push_back(std::move(outcomes[i].result->measurement));
    report.quality.push_back(std::move(outcomes[i].result->quality));
  }
  for (const std::size_t i : fail_order) report.failures.push_back(std::move(*outcomes[i].failure));

  if (!report.quality.empty()) apply_flagging(report.quality, config.policy);

  report.counts.processed = report.quality.size();
  report.counts.failed = report.failures.size();
  for (const auto& q : report.quality) {
    if (q.stage1_flagged)
      ++report.counts.stage1_flagged;
    else if (q.stage2_flagged)
      ++report.counts.stage2_flagged;
  }
  report.counts.surviving = report.counts.processed - report.counts.stage1_flagged - report.counts.stage2_flagged;
  report.finished_at = detail::utc_timestamp();
  return report;
}

// ---------------------------------------------------------------------------
// Report serialization. Schemas are fixed; see the README for the column
// contract. All numbers are shortest round-trip, so re-reading reproduces
// the exact values and identical runs produce byte-identical files.

inline std::string join_attribution(const std::vector<std::string>& attribution) {
  std::string s;
  for (std::size_t i = 0; i < attribution.size(); ++i) {
    if (i) s.push_back('|');
    s += attribution[i];
  }
  return s;
}

inline std::vector<std::string> split_attribution(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (const char c : s) {
    if (c == '|') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline CsvTable measurements_table(const std::vector<MeasurementRecord>& records) {
  CsvTable t;
  t.header = {"subject_id", "vol_left_cm3", "vol_right_cm3", "vol_total_cm3", "distance_mm", "scrap_share"};
  for (const auto& m : records) {
    t.rows.push_back({m.subject_id, format_double(m.vol_left_cm3), format_double(m.vol_right_cm3),
                      format_double(m.vol_total_cm3), m.distance_mm ? format_double(*m.distance_mm) : "",
                      format_double(m.scrap_share)});
  }
  return t;
}

inline CsvTable quality_table(const std::vector<QualityReport>& reports) {
  CsvTable t;
  t.header = {"subject_id",
              "image_fusion_cost",
              "image_fusion_cost_raw",
              "segmentation_fusion_cost",
              "segmentation_fusion_cost_raw",
              "location_cost",
              "smoothness_cost",
              "smoothness_cost_raw",
              "scrap_cost",
              "empty_segmentation",
              "bbox_touches_z",
              "stage1_flagged",
              "stage2_flagged",
              "attribution"};
  for (const auto& q : reports) {
    t.rows.push_back({q.subject_id, format_double(q.image_fusion), format_double(q.image_fusion_raw),
                      format_double(q.segmentation_fusion), format_double(q.segmentation_fusion_raw),
                      format_double(q.location), format_double(q.smoothness), format_double(q.smoothness_raw),
                      format_double(q.scrap), q.empty_segmentation ? "1" : "0", q.bbox_touches_z ? "1" : "0",
                      q.stage1_flagged ? "1" : "0", q.stage2_flagged ? "1" : "0", join_attribution(q.attribution)});
  }
  return t;
}

inline std::vector<QualityReport> quality_from_table(const CsvTable& t, const std::string& ctx) {
  std::vector<QualityReport> out;
  const std::size_t id = t.column("subject_id", ctx);
  const std::size_t ifc = t.column("image_fusion_cost", ctx);
  const std::size_t ifr = t.column("image_fusion_cost_raw", ctx);
  const std::size_t sfc = t.column("segmentation_fusion_cost", ctx);
  const std::size_t sfr = t.column("segmentation_fusion_cost_raw", ctx);
  const std::size_t loc = t.column("location_cost", ctx);
  const std::size_t smc = t.column("smoothness_cost", ctx);
  const std::size_t smr = t.column("smoothness_cost_raw", ctx);
  const std::size_t scr = t.column("scrap_cost", ctx);
  const std::size_t emp = t.column("empty_segmentation", ctx);
  const std::size_t bbx = t.column("bbox_touches_z", ctx);
  for (const auto& row : t.rows) {
    QualityReport q;
    q.subject_id = row[id];
    q.image_fusion = parse_double(row[ifc], ctx);
    q.image_fusion_raw = parse_double(row[ifr], ctx);
    q.segmentation_fusion = parse_double(row[sfc], ctx);
    q.segmentation_fusion_raw = parse_double(row[sfr], ctx);
    q.location = parse_double(row[loc], ctx);
    q.smoothness = parse_double(row[smc], ctx);
    q.smoothness_raw = parse_double(row[smr], ctx);
    q.scrap = parse_double(row[scr], ctx);
    q.empty_segmentation = row[emp] == "1";
    q.bbox_touches_z = row[bbx] == "1";
    out.push_back(std::move(q));
  }
  return out;
}

inline CsvTable flags_table(const std::vector<QualityReport>& reports) {
  CsvTable t;
  t.header = {"subject_id", "stage1_flagged", "stage2_flagged", "excluded", "attribution"};
  for (const auto& q : reports) {
    const bool excluded = q.stage1_flagged || q.stage2_flagged;
    t.rows.push_back({q.subject_id, q.stage1_flagged ? "1" : "0", q.stage2_flagged ? "1" : "0", excluded ? "1" : "0",
                      join_attribution(q.attribution)});
  }
  return t;
}

// The data behind the sorted rating-distribution plots: each column is that
// rating over the cohort, sorted worst-first, independently of the others.
inline CsvTable rating_curves_table(const std::vector<QualityReport>& reports) {
  std::vector<double> image_fusion, seg_fusion, location, smoothness, scrap;
  for (const auto& q : reports) {
    image_fusion.push_back(q.image_fusion);
    seg_fusion.push_back(q.segmentation_fusion);
    location.push_back(q.location);
    smoothness.push_back(q.smoothness);
    scrap.push_back(q.scrap);
  }
  const auto desc = [](std::vector<double>& v) { std::sort(v.begin(), v.end(), std::greater<double>()); };
  desc(image_fusion);
  desc(seg_fusion);
  desc(location);
  desc(smoothness);
  desc(scrap);

  CsvTable t;
  t.header = {"rank", "image_fusion", "segmentation_fusion", "location", "smoothness", "scrap"};
  for (std::size_t i = 0; i < image_fusion.size(); ++i) {
    t.rows.push_back({std::to_string(i + 1), format_double(image_fusion[i]), format_double(seg_fusion[i]),
                      format_double(location[i]), format_double(smoothness[i]), format_double(scrap[i])});
  }
  return t;
}

inline CsvTable failures_table(const std::vector<FailureRow>& failures) {
  CsvTable t;
  t.header = {"subject_id", "stage", "error"};
  for (const auto& f : failures) {
    std::string message = f.message;
    for (auto& c : message)
      if (c == ',' || c == '\n') c = ';';
    t.rows.push_back({f.subject_id, f.stage, message});
  }
  return t;
}

inline void write_reports(const CohortReport& report, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_csv(out_dir / "measurements.csv", measurements_table(report.measurements));
  write_csv(out_dir / "qc.csv", quality_table(report.quality));
  write_csv(out_dir / "flags.csv", flags_table(report.quality));
  write_csv(out_dir / "rating_curves.csv", rating_curves_table(report.quality));
  write_csv(out_dir / "failures.csv", failures_table(report.failures));

  std::ofstream summary(out_dir / "summary.txt");
  if (!summary) throw std::runtime_error("cannot write summary file in '" + out_dir.string() + "'");
  summary << "config_hash = " << report.config_hash << '\n'
          << "started_at = " << report.started_at << '\n'
          << "finished_at = " << report.finished_at << '\n'
          << "processed = " << report.counts.processed << '\n'
          << "failed = " << report.counts.failed << '\n'
          << "stage1_flagged = " << report.counts.stage1_flagged << '\n'
          << "stage2_flagged = " << report.counts.stage2_flagged << '\n'
          << "surviving = " << report.counts.surviving << '\n';
}

// ---------------------------------------------------------------------------
// Agreement validation between a predicted and a reference measurements CSV.

struct ValidationRow {
  std::string property;  // total, left, right, distance
  std::size_t n = 0;
  std::optional<AgreementSummary> summary;  // absent when fewer than 2 pairs
};

inline std::vector<ValidationRow> validate_measurements(const std::filesystem::path& predicted_csv,
                                                        const std::filesystem::path& reference_csv) {
  const CsvTable pred = read_csv(predicted_csv);
  const CsvTable ref = read_csv(reference_csv);
  const std::string pctx = "predicted file '" + predicted_csv.string() + "'";
  const std::string rctx = "reference file '" + reference_csv.string() + "'";

  const std::size_t pid = pred.column("subject_id", pctx);
  const std::size_t rid = ref.column("subject_id", rctx);

  std::map<std::string, std::size_t> pred_rows, ref_rows;
  for (std::size_t i = 0; i < pred.rows.size(); ++i) pred_rows[pred.rows[i][pid]] = i;
  for (std::size_t i = 0; i < ref.rows.size(); ++i) ref_rows[ref.rows[i][rid]] = i;

  std::vector<std::string> only_pred, only_ref;
  for (const auto& [id, _] : pred_rows)
    if (!ref_rows.count(id)) only_pred.push_back(id);
  for (const auto& [id, _] : ref_rows)
    if (!pred_rows.count(id)) only_ref.push_back(id);
  if (!only_pred.empty() || !only_ref.empty()) {
    std::string msg = "subject_id mismatch between predicted and reference files:";
    const auto list = [&msg](const char* label, const std::vector<std::string>& ids) {
      if (ids.empty()) return;
      msg += std::string("\n  ") + label + ":";
      for (std::size_t i = 0; i < std::min<std::size_t>(ids.size(), 8); ++i) msg += " " + ids[i];
      if (ids.size() > 8) msg += " ... (" + std::to_string(ids.size()) + " total)";
    };
    list("only in predicted", only_pred);
    list("only in reference", only_ref);
    throw std::runtime_error(msg);
  }

  const std::pair<const char*, const char*> properties[] = {{"total", "vol_total_cm3"},
                                                            {"left", "vol_left_cm3"},
                                                            {"right", "vol_right_cm3"},
                                                            {"distance", "distance_mm"}};
  std::vector<ValidationRow> out;
  for (const auto& [name, column] : properties) {
    if (!pred.has_column(column) || !ref.has_column(column)) continue;
    const std::size_t pc = pred.column(column, pctx);
    const std::size_t rc = ref.column(column, rctx);

    PairedSeries series;
    for (const auto& [id, pi] : pred_rows) {
      const std::string& pv = pred.rows[pi][pc];
      const std::string& rv = ref.rows[ref_rows.at(id)][rc];
      if (pv.empty() || rv.empty()) continue;  // absent measurements drop out pairwise
      series.entries.push_back({id, parse_double(rv, rctx), parse_double(pv, pctx)});
    }

    ValidationRow row;
    row.property = name;
    row.n = series.entries.size();
    if (series.entries.size() >= 2) row.summary = agreement(series);
    out.push_back(std::move(row));
  }
  if (out.empty())
    throw std::runtime_error("no shared measurement columns between predicted and reference files");
  return out;
}

inline CsvTable validation_table(const std::vector<ValidationRow>& rows) {
  CsvTable t;
  t.header = {"property", "n", "mae", "smape_pct", "r2", "mean_diff", "loa_low", "loa_high"};
  for (const auto& r : rows) {
    if (r.summary) {
      const auto& s = *r.summary;
      t.rows.push_back({r.property, std::to_string(r.n), format_double(s.mae), format_double(s.smape_pct),
                        format_double(s.r2), format_double(s.mean_diff), format_double(s.loa_low),
                        format_double(s.loa_high)});
    } else {
      t.rows.push_back({r.property, std::to_string(r.n), "", "", "", "", "", ""});
    }
  }
  return t;
}

}  // namespace kvol
