// kvol: batch kidney volumetry over two-station MRI volumes.
//
// Subcommands:
//   phantom   generate a synthetic cohort with ground truth
//   run       run the full pipeline over a manifest
//   qc        re-flag an existing qc.csv under a new policy
//   validate  agreement tables between predicted and reference measurements
//   fuse      fuse one subject's stations (debugging)
//   measure   component measurements of a fused label volume (debugging)

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kvol/components.hpp"
#include "kvol/config.hpp"
#include "kvol/fusion.hpp"
#include "kvol/manifest.hpp"
#include "kvol/measure.hpp"
#include "kvol/phantom_io.hpp"
#include "kvol/pipeline.hpp"
#include "kvol/volume_io.hpp"

namespace fs = std::filesystem;

namespace {

kvol::RunConfig load_config_or_default(const std::string& path) {
  if (path.empty()) {
    kvol::RunConfig cfg;
    cfg.validate();
    return cfg;
  }
  return kvol::load_config(path);
}

void print_validation(const std::vector<kvol::ValidationRow>& rows) {
  std::printf("%-10s %6s %12s %10s %8s %12s %24s\n", "property", "n", "MAE", "SMAPE", "R2", "mean diff", "95% LoA");
  for (const auto& r : rows) {
    if (r.summary) {
      const auto& s = *r.summary;
      std::printf("%-10s %6zu %12.4f %9.2f%% %8.3f %12.4f   (%10.4f, %10.4f)\n", r.property.c_str(), r.n, s.mae,
                  s.smape_pct, s.r2, s.mean_diff, s.loa_low, s.loa_high);
    } else {
      std::printf("%-10s %6zu   (fewer than 2 paired values)\n", r.property.c_str(), r.n);
    }
  }
}

int run_phantom(const std::string& out_dir, kvol::CohortOptions opts, bool write_masks) {
  const kvol::CohortFiles files = kvol::write_phantom_cohort(opts, out_dir, write_masks);
  std::cout << "wrote cohort of " << opts.subjects << " subjects under " << out_dir << "\n"
            << "  manifest:  " << files.manifest_csv.string() << "\n"
            << "  reference: " << files.reference_csv.string() << "\n"
            << "  artifacts: " << files.artifacts_csv.string() << "\n";
  if (write_masks) std::cout << "  masks:     " << files.mask_dir.string() << "\n";
  return 0;
}

int run_run(const std::string& manifest_path, const std::string& config_path, const std::string& out_dir,
            int workers) {
  const kvol::RunConfig config = load_config_or_default(config_path);
  const kvol::Manifest manifest = kvol::load_manifest(manifest_path);
  const kvol::CohortReport report = kvol::run_cohort(manifest, config, workers);
  kvol::write_reports(report, out_dir);
  std::cout << "processed " << report.counts.processed << " subjects (" << report.counts.failed << " failures), "
            << report.counts.stage1_flagged << " stage-1 flagged, " << report.counts.stage2_flagged
            << " stage-2 flagged, " << report.counts.surviving << " surviving\n"
            << "config hash " << report.config_hash << "; reports under " << out_dir << "\n";
  return 0;
}

int run_reflag(const std::string& qc_path, const std::string& config_path, const std::string& out_dir) {
  const kvol::RunConfig config = load_config_or_default(config_path);
  std::vector<kvol::QualityReport> reports =
      kvol::quality_from_table(kvol::read_csv(qc_path), "qc file '" + qc_path + "'");
  kvol::apply_flagging(reports, config.policy);
  fs::create_directories(out_dir);
  kvol::write_csv(fs::path(out_dir) / "qc.csv", kvol::quality_table(reports));
  kvol::write_csv(fs::path(out_dir) / "flags.csv", kvol::flags_table(reports));

  std::size_t s1 = 0, s2 = 0;
  for (const auto& r : reports) {
    s1 += r.stage1_flagged;
    s2 += r.stage2_flagged;
  }
  std::cout << "re-flagged " << reports.size() << " subjects: " << s1 << " stage-1, " << s2
            << " stage-2 (config hash " << kvol::config_hash(config) << ")\n";
  return 0;
}

int run_validate(const std::string& predicted, const std::string& reference, const std::string& out_csv) {
  const std::vector<kvol::ValidationRow> rows = kvol::validate_measurements(predicted, reference);
  print_validation(rows);
  if (!out_csv.empty()) {
    kvol::write_csv(out_csv, kvol::validation_table(rows));
    std::cout << "wrote " << out_csv << "\n";
  }
  return 0;
}

int run_fuse(const std::string& s2_path, const std::string& s3_path, const std::string& config_path,
             const std::string& mask2, const std::string& mask3, const std::string& out_dir,
             const std::string& subject_id) {
  const kvol::RunConfig config = load_config_or_default(config_path);
  kvol::StationPair input;
  input.subject_id = subject_id;
  input.station2 = kvol::load_intensity_volume(s2_path);
  input.station3 = kvol::load_intensity_volume(s3_path);

  const kvol::VolumeGrid<float> t2 = kvol::trim_station(input.station2, config.trim_slices);
  const kvol::VolumeGrid<float> t3 = kvol::trim_station(input.station3, config.trim_slices);
  const auto seg = [&](const kvol::VolumeGrid<float>& station, const std::string& mask_path, int index) {
    if (!mask_path.empty())
      return kvol::adopt_external_mask(station, kvol::load_label_volume(mask_path));
    return kvol::segment_station(station, config.segmenter, subject_id, index);
  };
  const kvol::VolumeGrid<std::uint8_t> l2 = seg(t2, mask2, 2);
  const kvol::VolumeGrid<std::uint8_t> l3 = seg(t3, mask3, 3);

  const kvol::FusedVolume fused = kvol::fuse(t2, t3, l2, l3);
  fs::create_directories(out_dir);
  kvol::save_volume(fs::path(out_dir) / "fused_image.nii", fused.image);
  kvol::save_volume(fs::path(out_dir) / "fused_labels.nii", fused.labels);

  const auto& g = fused.image.geometry();
  std::cout << "fused grid " << g.dims[0] << "x" << g.dims[1] << "x" << g.dims[2] << " at spacing " << g.spacing[0]
            << "x" << g.spacing[1] << "x" << g.spacing[2] << " mm\n";
  if (fused.overlap.empty)
    std::cout << "stations abut without overlap\n";
  else
    std::cout << "overlap z range [" << fused.overlap.z_lo << ", " << fused.overlap.z_hi << "] mm\n";
  std::cout << "wrote fused_image.nii and fused_labels.nii under " << out_dir << "\n";
  return 0;
}

int run_measure(const std::string& labels_path, int connectivity) {
  const kvol::VolumeGrid<std::uint8_t> labels = kvol::load_label_volume(labels_path);
  const kvol::ComponentSet components = kvol::connected_components(labels, connectivity);
  const kvol::KidneyPair pair = kvol::split_pair(components, labels.geometry().mid_world(0));
  const kvol::MeasurementRecord rec = kvol::measure_subject("subject", pair, labels.geometry().spacing);

  std::cout << "components: " << components.components.size() << " (connectivity " << connectivity << ")\n";
  std::printf("volume left  %10.3f cm^3\n", rec.vol_left_cm3);
  std::printf("volume right %10.3f cm^3\n", rec.vol_right_cm3);
  std::printf("volume total %10.3f cm^3\n", rec.vol_total_cm3);
  if (rec.distance_mm)
    std::printf("distance     %10.3f mm\n", *rec.distance_mm);
  else
    std::printf("distance     absent (fewer than two kidneys)\n");
  std::printf("scrap share  %10.6f\n", rec.scrap_share);
  if (rec.com_left)
    std::printf("COM left     (%.2f, %.2f, %.2f) mm\n", (*rec.com_left)[0], (*rec.com_left)[1], (*rec.com_left)[2]);
  if (rec.com_right)
    std::printf("COM right    (%.2f, %.2f, %.2f) mm\n", (*rec.com_right)[0], (*rec.com_right)[1],
                (*rec.com_right)[2]);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kvol: two-station kidney volumetry pipeline with algorithmic quality control"};
  app.require_subcommand(1);

  // phantom
  auto* phantom = app.add_subcommand("phantom", "generate a synthetic cohort with ground truth");
  std::string ph_out;
  kvol::CohortOptions opts;
  bool write_masks = false;
  std::vector<int> ph_dims;
  std::vector<double> ph_spacing;
  phantom->add_option("--out", ph_out, "output directory")->required();
  phantom->add_option("--subjects", opts.subjects, "number of subjects")->check(CLI::PositiveNumber);
  phantom->add_option("--seed", opts.seed, "generation seed");
  phantom->add_option("--dims", ph_dims, "station dims: nx ny nz")->expected(3);
  phantom->add_option("--spacing", ph_spacing, "voxel spacing in mm: sx sy sz")->expected(3);
  phantom->add_option("--overlap", opts.overlap_slices, "station overlap in slices (untrimmed)");
  phantom->add_option("--trim", opts.trim_slices, "slices the pipeline will trim per station end");
  phantom->add_option("--noise", opts.noise_sigma, "intensity noise sigma");
  phantom->add_option("--motion", opts.artifacts.motion, "subjects with inter-station motion");
  phantom->add_option("--islands", opts.artifacts.islands, "subjects with spurious islands");
  phantom->add_option("--cysts", opts.artifacts.cysts, "subjects with carved cysts");
  phantom->add_option("--missing", opts.artifacts.missing_kidney, "subjects with a deleted kidney");
  phantom->add_option("--location", opts.artifacts.location_shift, "subjects pushed against the top border");
  phantom->add_flag("--write-masks", write_masks, "also write per-station ground-truth masks");

  // run
  auto* run = app.add_subcommand("run", "run the cohort pipeline over a manifest");
  std::string run_manifest, run_config, run_out;
  int run_workers = 1;
  run->add_option("--manifest", run_manifest, "manifest CSV")->required()->check(CLI::ExistingFile);
  run->add_option("--config", run_config, "config file (key = value); defaults apply when omitted")
      ->check(CLI::ExistingFile);
  run->add_option("--out", run_out, "output directory for reports")->required();
  run->add_option("--workers", run_workers, "worker threads")->check(CLI::PositiveNumber);

  // qc
  auto* qc = app.add_subcommand("qc", "re-flag an existing qc.csv under a new policy");
  std::string qc_in, qc_config, qc_out;
  qc->add_option("--qc", qc_in, "existing qc.csv")->required()->check(CLI::ExistingFile);
  qc->add_option("--config", qc_config, "config file with the new policy")->check(CLI::ExistingFile);
  qc->add_option("--out", qc_out, "output directory")->required();

  // validate
  auto* validate = app.add_subcommand("validate", "agreement tables between predicted and reference CSVs");
  std::string val_pred, val_ref, val_out;
  validate->add_option("--predicted", val_pred, "predicted measurements CSV")->required()->check(CLI::ExistingFile);
  validate->add_option("--reference", val_ref, "reference measurements CSV")->required()->check(CLI::ExistingFile);
  validate->add_option("--out", val_out, "also write the table as CSV");

  // fuse
  auto* fuse = app.add_subcommand("fuse", "fuse one subject's stations (debugging)");
  std::string fuse_s2, fuse_s3, fuse_config, fuse_mask2, fuse_mask3, fuse_out, fuse_id = "subject";
  fuse->add_option("--station2", fuse_s2, "upper station volume")->required()->check(CLI::ExistingFile);
  fuse->add_option("--station3", fuse_s3, "lower station volume")->required()->check(CLI::ExistingFile);
  fuse->add_option("--config", fuse_config, "config file")->check(CLI::ExistingFile);
  fuse->add_option("--mask2", fuse_mask2, "explicit station-2 mask")->check(CLI::ExistingFile);
  fuse->add_option("--mask3", fuse_mask3, "explicit station-3 mask")->check(CLI::ExistingFile);
  fuse->add_option("--subject", fuse_id, "subject id for mask lookup");
  fuse->add_option("--out", fuse_out, "output directory")->required();

  // measure
  auto* measure = app.add_subcommand("measure", "measure a fused label volume (debugging)");
  std::string measure_labels;
  int measure_conn = 6;
  measure->add_option("--labels", measure_labels, "fused binary label volume")->required()->check(CLI::ExistingFile);
  measure->add_option("--connectivity", measure_conn, "6 or 26");

  CLI11_PARSE(app, argc, argv);

  try {
    if (phantom->parsed()) {
      if (ph_dims.size() == 3) opts.station_dims = {ph_dims[0], ph_dims[1], ph_dims[2]};
      if (ph_spacing.size() == 3) opts.spacing = {ph_spacing[0], ph_spacing[1], ph_spacing[2]};
      return run_phantom(ph_out, opts, write_masks);
    }
    if (run->parsed()) return run_run(run_manifest, run_config, run_out, run_workers);
    if (qc->parsed()) return run_reflag(qc_in, qc_config, qc_out);
    if (validate->parsed()) return run_validate(val_pred, val_ref, val_out);
    if (fuse->parsed()) return run_fuse(fuse_s2, fuse_s3, fuse_config, fuse_mask2, fuse_mask3, fuse_out, fuse_id);
    if (measure->parsed()) return run_measure(measure_labels, measure_conn);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
