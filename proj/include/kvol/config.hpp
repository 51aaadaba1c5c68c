#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>

#include "kvol/csv.hpp"
#include "kvol/qc.hpp"
#include "kvol/segment.hpp"

// Run configuration: a plain key = value text file covering every threshold
// of the flagging policy, the connectivity, the blend scheme, and the
// segmenter. The canonical serialization is hashed (FNV-1a 64) and recorded
// in every report, so results are attributable to an exact configuration.

namespace kvol {

struct RunConfig {
  int trim_slices = 3;
  int connectivity = 6;
  std::string blend = "linear";  // only scheme implemented
  SegmenterSpec segmenter;
  FlaggingPolicy policy;

  void validate() const {
    if (trim_slices < 0) throw std::invalid_argument("trim_slices must be >= 0");
    if (connectivity != 6 && connectivity != 26) throw std::invalid_argument("connectivity must be 6 or 26");
    if (blend != "linear") throw std::invalid_argument("unknown blend scheme '" + blend + "' (linear)");
    if (!(segmenter.threshold > 0.0 && segmenter.threshold < 1.0))
      throw std::invalid_argument("segmenter.threshold must lie in (0, 1)");
    if (segmenter.clip_fraction < 0.0 || segmenter.clip_fraction >= 1.0)
      throw std::invalid_argument("segmenter.clip_fraction must lie in [0, 1)");
    if (segmenter.kind == SegmenterKind::external_masks && segmenter.mask_dir.empty())
      throw std::invalid_argument("segmenter.mask_dir is required for external_masks");
    policy.validate();
  }
};

namespace detail {

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config key '" + key + "' expects true/false, got '" + v + "'");
}

}  // namespace detail

inline RunConfig parse_config_text(std::istream& in, const std::string& origin) {
  RunConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line.erase(hash_pos);
    const auto trim = [](std::string& s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      s = (b == std::string::npos) ? "" : s.substr(b, e - b + 1);
    };
    trim(line);
    if (line.empty()) continue;

    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    trim(key);
    trim(value);

    const std::string ctx = origin + ":" + std::to_string(line_no);
    if (key == "trim_slices")
      cfg.trim_slices = static_cast<int>(parse_double(value, ctx));
    else if (key == "connectivity")
      cfg.connectivity = static_cast<int>(parse_double(value, ctx));
    else if (key == "blend")
      cfg.blend = value;
    else if (key == "segmenter")
      cfg.segmenter.kind = segmenter_kind_from_string(value);
    else if (key == "segmenter.threshold")
      cfg.segmenter.threshold = parse_double(value, ctx);
    else if (key == "segmenter.clip_fraction")
      cfg.segmenter.clip_fraction = parse_double(value, ctx);
    else if (key == "segmenter.mask_dir")
      cfg.segmenter.mask_dir = value;
    else if (key == "flag.location")
      cfg.policy.stage1_location = parse_double(value, ctx);
    else if (key == "flag.image_fusion")
      cfg.policy.stage1_image_fusion = parse_double(value, ctx);
    else if (key == "flag.segmentation_fusion")
      cfg.policy.stage1_segmentation_fusion = parse_double(value, ctx);
    else if (key == "flag.smoothness")
      cfg.policy.stage2_smoothness = parse_double(value, ctx);
    else if (key == "flag.scrap")
      cfg.policy.stage2_scrap = parse_double(value, ctx);
    else if (key == "flag.auto_reinclude_location")
      cfg.policy.auto_reinclude_location = detail::parse_bool(value, key);
    else if (key == "flag.use_normalized")
      cfg.policy.use_normalized = detail::parse_bool(value, key);
    else
      throw std::invalid_argument(ctx + ": unknown config key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path.string() + "'");
  return parse_config_text(in, path.string());
}

// Canonical serialization: fixed key order, shortest round-trip numbers.
// Writing this text back through parse_config_text reproduces the config.
inline std::string canonical_config(const RunConfig& cfg) {
  std::string s;
  s += "blend = " + cfg.blend + "\n";
  s += "connectivity = " + std::to_string(cfg.connectivity) + "\n";
  s += "flag.auto_reinclude_location = " + std::string(cfg.policy.auto_reinclude_location ? "true" : "false") + "\n";
  s += "flag.image_fusion = " + format_double(cfg.policy.stage1_image_fusion) + "\n";
  s += "flag.location = " + format_double(cfg.policy.stage1_location) + "\n";
  s += "flag.scrap = " + format_double(cfg.policy.stage2_scrap) + "\n";
  s += "flag.segmentation_fusion = " + format_double(cfg.policy.stage1_segmentation_fusion) + "\n";
  s += "flag.smoothness = " + format_double(cfg.policy.stage2_smoothness) + "\n";
  s += "flag.use_normalized = " + std::string(cfg.policy.use_normalized ? "true" : "false") + "\n";
  s += "segmenter = " + std::string(to_string(cfg.segmenter.kind)) + "\n";
  s += "segmenter.clip_fraction = " + format_double(cfg.segmenter.clip_fraction) + "\n";
  s += "segmenter.mask_dir = " + cfg.segmenter.mask_dir.string() + "\n";
  s += "segmenter.threshold = " + format_double(cfg.segmenter.threshold) + "\n";
  s += "trim_slices = " + std::to_string(cfg.trim_slices) + "\n";
  return s;
}

inline std::string config_hash(const RunConfig& cfg) {
  const std::string text = canonical_config(cfg);
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf, 16);
}

}  // namespace kvol
