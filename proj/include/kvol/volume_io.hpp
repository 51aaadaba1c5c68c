#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "kvol/grid.hpp"

// Volume file I/O. Two formats:
//  - a minimal single-file NIfTI-1 subset: 348-byte header, data at offset
//    352, magic "n+1", datatypes uint8 / int16 / float32, little-endian,
//    uncompressed, axis-aligned geometry only;
//  - a raw little-endian array next to a text sidecar (<file>.raw plus
//    <file>.raw.meta) carrying dims, spacing, origin, and dtype.
// Format is picked by extension: .nii or .raw.

namespace kvol {

static_assert(std::endian::native == std::endian::little, "volume I/O assumes a little-endian host");

namespace niftidetail {

inline constexpr std::int32_t kHeaderSize = 348;
inline constexpr std::int64_t kDataOffset = 352;
inline constexpr std::int16_t kDtUint8 = 2;
inline constexpr std::int16_t kDtInt16 = 4;
inline constexpr std::int16_t kDtFloat32 = 16;

template <typename T>
void put(std::vector<char>& buf, std::size_t offset, T value) {
  std::memcpy(buf.data() + offset, &value, sizeof(T));
}

template <typename T>
T get(const std::vector<char>& buf, std::size_t offset) {
  T value;
  std::memcpy(&value, buf.data() + offset, sizeof(T));
  return value;
}

inline std::vector<char> make_header(const GridGeometry& g, std::int16_t datatype, std::int16_t bitpix) {
  std::vector<char> h(kDataOffset, 0);
  put<std::int32_t>(h, 0, kHeaderSize);
  put<std::int16_t>(h, 40, 3);  // dim[0]
  for (int a = 0; a < 3; ++a) put<std::int16_t>(h, 42 + 2 * a, static_cast<std::int16_t>(g.dims[a]));
  for (int a = 3; a < 7; ++a) put<std::int16_t>(h, 42 + 2 * a, 1);
  put<std::int16_t>(h, 70, datatype);
  put<std::int16_t>(h, 72, bitpix);
  put<float>(h, 76, 1.0f);  // pixdim[0] (qfac)
  for (int a = 0; a < 3; ++a) put<float>(h, 80 + 4 * a, static_cast<float>(g.spacing[a]));
  put<float>(h, 108, static_cast<float>(kDataOffset));  // vox_offset
  put<float>(h, 112, 1.0f);                             // scl_slope
  put<float>(h, 116, 0.0f);                             // scl_inter
  h[123] = 2;                                           // xyzt_units: mm
  put<std::int16_t>(h, 254, 1);                         // sform_code: scanner
  // Diagonal sform: spacing on the diagonal, origin in the fourth column.
  put<float>(h, 280, static_cast<float>(g.spacing[0]));
  put<float>(h, 292, static_cast<float>(g.origin[0]));
  put<float>(h, 300, static_cast<float>(g.spacing[1]));
  put<float>(h, 308, static_cast<float>(g.origin[1]));
  put<float>(h, 320, static_cast<float>(g.spacing[2]));
  put<float>(h, 324, static_cast<float>(g.origin[2]));
  std::memcpy(h.data() + 344, "n+1", 4);
  return h;
}

struct ParsedHeader {
  GridGeometry geometry;
  std::int16_t datatype = 0;
  std::int64_t data_offset = 0;
  float scl_slope = 1.0f;
  float scl_inter = 0.0f;
};

inline ParsedHeader parse_header(const std::vector<char>& h, const std::string& path) {
  const auto fail = [&](const std::string& why) -> ParsedHeader {
    throw std::runtime_error("cannot read NIfTI volume '" + path + "': " + why);
  };

  if (get<std::int32_t>(h, 0) != kHeaderSize)
    fail("sizeof_hdr is not 348 (big-endian or non-NIfTI input is unsupported)");
  if (std::memcmp(h.data() + 344, "n+1", 3) != 0)
    fail("magic is not 'n+1' (two-file .hdr/.img pairs are unsupported)");

  const std::int16_t ndim = get<std::int16_t>(h, 40);
  if (ndim < 3 || ndim > 7) fail("dim[0] must be 3 (got " + std::to_string(ndim) + ")");
  for (int a = 4; a <= ndim; ++a) {
    const std::int16_t extra = get<std::int16_t>(h, 40 + 2 * a);
    if (extra > 1) fail("4D and higher volumes are unsupported");
  }

  ParsedHeader out;
  out.datatype = get<std::int16_t>(h, 70);
  if (out.datatype != kDtUint8 && out.datatype != kDtInt16 && out.datatype != kDtFloat32)
    fail("unsupported datatype " + std::to_string(out.datatype) + " (supported: uint8, int16, float32)");

  for (int a = 0; a < 3; ++a) out.geometry.dims[a] = get<std::int16_t>(h, 42 + 2 * a);

  const std::int16_t sform_code = get<std::int16_t>(h, 254);
  const std::int16_t qform_code = get<std::int16_t>(h, 252);
  if (sform_code > 0) {
    const float sx[4] = {get<float>(h, 280), get<float>(h, 284), get<float>(h, 288), get<float>(h, 292)};
    const float sy[4] = {get<float>(h, 296), get<float>(h, 300), get<float>(h, 304), get<float>(h, 308)};
    const float sz[4] = {get<float>(h, 312), get<float>(h, 316), get<float>(h, 320), get<float>(h, 324)};
    const double diag[3] = {sx[0], sy[1], sz[2]};
    const double off_diag =
        std::abs(sx[1]) + std::abs(sx[2]) + std::abs(sy[0]) + std::abs(sy[2]) + std::abs(sz[0]) + std::abs(sz[1]);
    if (off_diag > 1e-4 * std::max({std::abs(diag[0]), std::abs(diag[1]), std::abs(diag[2]), 1.0}))
      fail("oblique or rotated orientations are unsupported");
    for (int a = 0; a < 3; ++a) {
      if (!(diag[a] > 0.0)) fail("flipped or degenerate sform axes are unsupported");
      out.geometry.spacing[a] = diag[a];
    }
    out.geometry.origin = {sx[3], sy[3], sz[3]};
  } else if (qform_code > 0) {
    const float qb = get<float>(h, 256), qc = get<float>(h, 260), qd = get<float>(h, 264);
    if (std::abs(qb) + std::abs(qc) + std::abs(qd) > 1e-4) fail("rotated qform orientations are unsupported");
    const float qfac = get<float>(h, 76);
    if (qfac < 0.0f) fail("qfac of -1 (flipped z) is unsupported");
    for (int a = 0; a < 3; ++a) out.geometry.spacing[a] = get<float>(h, 80 + 4 * a);
    out.geometry.origin = {get<float>(h, 268), get<float>(h, 272), get<float>(h, 276)};
  } else {
    for (int a = 0; a < 3; ++a) out.geometry.spacing[a] = get<float>(h, 80 + 4 * a);
    out.geometry.origin = {0.0, 0.0, 0.0};
  }
  out.geometry.validate();

  const float vox_offset = get<float>(h, 108);
  out.data_offset = static_cast<std::int64_t>(vox_offset);
  if (out.data_offset < kHeaderSize) fail("vox_offset below the header size");
  out.scl_slope = get<float>(h, 112);
  out.scl_inter = get<float>(h, 116);
  return out;
}

}  // namespace niftidetail

namespace iodetail {

inline bool has_extension(const std::filesystem::path& path, const char* ext) {
  const std::string e = path.extension().string();
  return e == ext;
}

inline std::vector<char> read_all(const std::filesystem::path& path, std::int64_t offset, std::size_t count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open volume file '" + path.string() + "'");
  in.seekg(offset);
  std::vector<char> buf(count);
  in.read(buf.data(), static_cast<std::streamsize>(count));
  if (static_cast<std::size_t>(in.gcount()) != count)
    throw std::runtime_error("truncated volume file '" + path.string() + "': expected " + std::to_string(count) +
                             " bytes at offset " + std::to_string(offset) + ", got " + std::to_string(in.gcount()));
  return buf;
}

template <typename Raw>
std::vector<double> decode(const std::vector<char>& bytes, std::size_t n, float slope, float inter) {
  std::vector<double> out(n);
  const bool scale = slope != 0.0f && !(slope == 1.0f && inter == 0.0f);
  for (std::size_t i = 0; i < n; ++i) {
    Raw raw;
    std::memcpy(&raw, bytes.data() + i * sizeof(Raw), sizeof(Raw));
    double value = static_cast<double>(raw);
    if (scale) value = value * slope + inter;
    out[i] = value;
  }
  return out;
}

struct RawMeta {
  GridGeometry geometry;
  std::string dtype;
};

inline std::filesystem::path sidecar_path(const std::filesystem::path& raw_path) {
  return std::filesystem::path(raw_path.string() + ".meta");
}

inline RawMeta read_sidecar(const std::filesystem::path& raw_path) {
  const std::filesystem::path meta = sidecar_path(raw_path);
  std::ifstream in(meta);
  if (!in) throw std::runtime_error("missing sidecar '" + meta.string() + "' for raw volume");
  RawMeta out;
  bool have_dims = false, have_spacing = false, have_dtype = false;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    const auto trim = [](std::string& s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      s = (b == std::string::npos) ? "" : s.substr(b, e - b + 1);
    };
    trim(key);
    trim(value);
    std::istringstream vs(value);
    if (key == "dims") {
      vs >> out.geometry.dims[0] >> out.geometry.dims[1] >> out.geometry.dims[2];
      have_dims = !vs.fail();
    } else if (key == "spacing") {
      vs >> out.geometry.spacing[0] >> out.geometry.spacing[1] >> out.geometry.spacing[2];
      have_spacing = !vs.fail();
    } else if (key == "origin") {
      vs >> out.geometry.origin[0] >> out.geometry.origin[1] >> out.geometry.origin[2];
    } else if (key == "dtype") {
      out.dtype = value;
      have_dtype = true;
    }
  }
  if (!have_dims || !have_spacing || !have_dtype)
    throw std::runtime_error("sidecar '" + meta.string() + "' must define dims, spacing, and dtype");
  out.geometry.validate();
  return out;
}

inline void write_sidecar(const std::filesystem::path& raw_path, const GridGeometry& g, const std::string& dtype) {
  const std::filesystem::path meta = sidecar_path(raw_path);
  std::ofstream out(meta);
  if (!out) throw std::runtime_error("cannot write sidecar '" + meta.string() + "'");
  out << "dims = " << g.dims[0] << ' ' << g.dims[1] << ' ' << g.dims[2] << '\n';
  out << "spacing = " << g.spacing[0] << ' ' << g.spacing[1] << ' ' << g.spacing[2] << '\n';
  out << "origin = " << g.origin[0] << ' ' << g.origin[1] << ' ' << g.origin[2] << '\n';
  out << "dtype = " << dtype << '\n';
}

// Decoded scalar volume with the original element kind, before any
// intensity/label typing decision.
struct DecodedVolume {
  GridGeometry geometry;
  std::vector<double> values;
};

inline DecodedVolume load_any(const std::filesystem::path& path) {
  if (has_extension(path, ".nii")) {
    std::vector<char> header = read_all(path, 0, static_cast<std::size_t>(niftidetail::kHeaderSize));
    header.resize(niftidetail::kDataOffset, 0);
    const niftidetail::ParsedHeader ph = niftidetail::parse_header(header, path.string());
    const std::size_t n = ph.geometry.voxel_count();
    DecodedVolume out;
    out.geometry = ph.geometry;
    switch (ph.datatype) {
      case niftidetail::kDtUint8:
        out.values = decode<std::uint8_t>(read_all(path, ph.data_offset, n), n, ph.scl_slope, ph.scl_inter);
        break;
      case niftidetail::kDtInt16:
        out.values = decode<std::int16_t>(read_all(path, ph.data_offset, 2 * n), n, ph.scl_slope, ph.scl_inter);
        break;
      default:
        out.values = decode<float>(read_all(path, ph.data_offset, 4 * n), n, ph.scl_slope, ph.scl_inter);
        break;
    }
    return out;
  }
  if (has_extension(path, ".raw")) {
    const RawMeta meta = read_sidecar(path);
    const std::size_t n = meta.geometry.voxel_count();
    DecodedVolume out;
    out.geometry = meta.geometry;
    if (meta.dtype == "float32")
      out.values = decode<float>(read_all(path, 0, 4 * n), n, 1.0f, 0.0f);
    else if (meta.dtype == "uint8")
      out.values = decode<std::uint8_t>(read_all(path, 0, n), n, 1.0f, 0.0f);
    else if (meta.dtype == "int16")
      out.values = decode<std::int16_t>(read_all(path, 0, 2 * n), n, 1.0f, 0.0f);
    else
      throw std::runtime_error("sidecar dtype '" + meta.dtype + "' unsupported (float32, uint8, int16)");
    return out;
  }
  throw std::runtime_error("unsupported volume format '" + path.extension().string() +
                           "' for '" + path.string() + "' (expected .nii or .raw)");
}

}  // namespace iodetail

inline VolumeGrid<float> load_intensity_volume(const std::filesystem::path& path) {
  iodetail::DecodedVolume d = iodetail::load_any(path);
  std::vector<float> values(d.values.begin(), d.values.end());
  return VolumeGrid<float>(d.geometry, std::move(values));
}

// Loads a binary label volume; any stored value other than exactly 0 or 1 is
// rejected so label grids keep their invariant.
inline VolumeGrid<std::uint8_t> load_label_volume(const std::filesystem::path& path) {
  iodetail::DecodedVolume d = iodetail::load_any(path);
  std::vector<std::uint8_t> values(d.values.size());
  for (std::size_t i = 0; i < d.values.size(); ++i) {
    if (d.values[i] == 0.0)
      values[i] = 0;
    else if (d.values[i] == 1.0)
      values[i] = 1;
    else
      throw std::runtime_error("label volume '" + path.string() + "' contains non-binary value " +
                               std::to_string(d.values[i]));
  }
  return VolumeGrid<std::uint8_t>(d.geometry, std::move(values));
}

namespace iodetail {

template <typename T>
void write_payload(const std::filesystem::path& path, const VolumeGrid<T>& grid, std::int16_t nifti_dtype,
                   std::int16_t bitpix, const char* raw_dtype) {
  if (has_extension(path, ".nii")) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write volume file '" + path.string() + "'");
    const std::vector<char> header = niftidetail::make_header(grid.geometry(), nifti_dtype, bitpix);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(grid.values().data()),
              static_cast<std::streamsize>(grid.values().size() * sizeof(T)));
    if (!out) throw std::runtime_error("failed writing volume file '" + path.string() + "'");
    return;
  }
  if (has_extension(path, ".raw")) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write volume file '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(grid.values().data()),
              static_cast<std::streamsize>(grid.values().size() * sizeof(T)));
    if (!out) throw std::runtime_error("failed writing volume file '" + path.string() + "'");
    write_sidecar(path, grid.geometry(), raw_dtype);
    return;
  }
  throw std::runtime_error("unsupported volume format '" + path.extension().string() + "' (expected .nii or .raw)");
}

}  // namespace iodetail

inline void save_volume(const std::filesystem::path& path, const VolumeGrid<float>& grid) {
  iodetail::write_payload(path, grid, niftidetail::kDtFloat32, 32, "float32");
}

inline void save_volume(const std::filesystem::path& path, const VolumeGrid<std::uint8_t>& grid) {
  iodetail::write_payload(path, grid, niftidetail::kDtUint8, 8, "uint8");
}

}  // namespace kvol
