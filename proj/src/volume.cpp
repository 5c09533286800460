#include "probe/volume.hpp"

#include <algorithm>
#include "json.hpp"

#include "probe/io.hpp"

namespace probe {

namespace {

constexpr std::string_view kMagic = "PVOL1\n";

void validate_grid(const Dims& d, const Spacing& s) {
  if (d.nx < 1 || d.ny < 1 || d.nz < 1) throw ShapeError("volume dims must be >= 1, got " + d.str());
  if (!(s.sx > 0 && s.sy > 0 && s.sz > 0)) throw ShapeError("volume spacing must be > 0");
}

std::string encode_header(const Dims& d, const Spacing& s, std::string_view dtype) {
  nlohmann::ordered_json h;
  h["dims"] = {d.nx, d.ny, d.nz};
  h["spacing"] = {s.sx, s.sy, s.sz};
  h["dtype"] = dtype;
  std::string out(kMagic);
  out += h.dump();
  out += '\n';
  return out;
}

using Kind = VolumeFormatError::Kind;

}  // namespace

std::string Dims::str() const {
  return "(" + std::to_string(nx) + "," + std::to_string(ny) + "," + std::to_string(nz) + ")";
}

MaskVolume::MaskVolume(Dims dims, Spacing spacing)
    : dims_(dims), spacing_(spacing) {
  validate_grid(dims_, spacing_);
  voxels_.assign(dims_.size(), 0);
}

MaskVolume::MaskVolume(Dims dims, Spacing spacing, std::vector<std::uint8_t> voxels)
    : dims_(dims), spacing_(spacing), voxels_(std::move(voxels)) {
  validate_grid(dims_, spacing_);
  if (voxels_.size() != dims_.size()) {
    throw ShapeError("mask buffer holds " + std::to_string(voxels_.size()) + " voxels, dims " +
                     dims_.str() + " need " + std::to_string(dims_.size()));
  }
  if (std::any_of(voxels_.begin(), voxels_.end(), [](std::uint8_t v) { return v > 1; })) {
    throw ShapeError("mask voxels must be 0 or 1");
  }
}

double MaskVolume::volume_mm3() const {
  return static_cast<double>(voxel_count(*this)) * spacing_.sx * spacing_.sy * spacing_.sz;
}

ImageVolume::ImageVolume(Dims dims, Spacing spacing, std::int16_t fill)
    : dims_(dims), spacing_(spacing) {
  validate_grid(dims_, spacing_);
  voxels_.assign(dims_.size(), fill);
}

ImageVolume::ImageVolume(Dims dims, Spacing spacing, std::vector<std::int16_t> voxels)
    : dims_(dims), spacing_(spacing), voxels_(std::move(voxels)) {
  validate_grid(dims_, spacing_);
  if (voxels_.size() != dims_.size()) {
    throw ShapeError("image buffer holds " + std::to_string(voxels_.size()) + " voxels, dims " +
                     dims_.str() + " need " + std::to_string(dims_.size()));
  }
}

DiceScore dice(const MaskVolume& a, const MaskVolume& b) {
  if (a.dims() != b.dims()) {
    throw ShapeError("dice: dimension mismatch " + a.dims().str() + " vs " + b.dims().str());
  }
  const auto va = a.voxels();
  const auto vb = b.voxels();
  std::uint64_t inter = 0;
  std::uint64_t na = 0;
  std::uint64_t nb = 0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    na += va[i];
    nb += vb[i];
    inter += va[i] & vb[i];
  }
  if (na + nb == 0) return {1.0, true};
  return {static_cast<double>(2 * inter) / static_cast<double>(na + nb), false};
}

bool is_zero_mask(const MaskVolume& v) {
  const auto vox = v.voxels();
  return std::all_of(vox.begin(), vox.end(), [](std::uint8_t x) { return x == 0; });
}

std::uint64_t voxel_count(const MaskVolume& v) {
  std::uint64_t n = 0;
  for (std::uint8_t x : v.voxels()) n += x;
  return n;
}

VolumeFormatError::VolumeFormatError(Kind kind, std::uint64_t offset, const std::string& detail)
    : Error("PVOL: " + detail + " at byte offset " + std::to_string(offset)), kind_(kind), offset_(offset) {}

std::string encode_volume(const MaskVolume& v) {
  std::string out = encode_header(v.dims(), v.spacing(), "u8");
  const auto vox = v.voxels();
  out.append(reinterpret_cast<const char*>(vox.data()), vox.size());
  return out;
}

std::string encode_volume(const ImageVolume& v) {
  std::string out = encode_header(v.dims(), v.spacing(), "i16");
  const auto vox = v.voxels();
  out.reserve(out.size() + vox.size() * 2);
  for (std::int16_t s : vox) {
    const auto u = static_cast<std::uint16_t>(s);
    out.push_back(static_cast<char>(u & 0xFF));
    out.push_back(static_cast<char>(u >> 8));
  }
  return out;
}

AnyVolume decode_volume(std::string_view bytes) {
  if (bytes.substr(0, kMagic.size()) != kMagic) {
    throw VolumeFormatError(Kind::bad_magic, 0, "bad magic (expected \"PVOL1\\n\")");
  }
  const std::size_t header_begin = kMagic.size();
  const std::size_t nl = bytes.find('\n', header_begin);
  if (nl == std::string_view::npos) {
    throw VolumeFormatError(Kind::malformed_header, header_begin, "header line not terminated");
  }
  Dims dims;
  Spacing spacing;
  std::string dtype;
  try {
    const auto h = nlohmann::json::parse(bytes.substr(header_begin, nl - header_begin));
    const auto& d = h.at("dims");
    const auto& s = h.at("spacing");
    if (!d.is_array() || d.size() != 3 || !s.is_array() || s.size() != 3) {
      throw VolumeFormatError(Kind::malformed_header, header_begin, "dims/spacing must be 3-element arrays");
    }
    for (const auto& e : d) {
      if (!e.is_number_integer()) {
        throw VolumeFormatError(Kind::malformed_header, header_begin, "dims must be integers");
      }
    }
    dims = {d[0].get<std::int64_t>(), d[1].get<std::int64_t>(), d[2].get<std::int64_t>()};
    spacing = {s[0].get<double>(), s[1].get<double>(), s[2].get<double>()};
    dtype = h.at("dtype").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw VolumeFormatError(Kind::malformed_header, header_begin, std::string("bad header JSON: ") + e.what());
  }
  if (dims.nx < 1 || dims.ny < 1 || dims.nz < 1 || !(spacing.sx > 0 && spacing.sy > 0 && spacing.sz > 0)) {
    throw VolumeFormatError(Kind::malformed_header, header_begin, "non-positive dims or spacing");
  }
  if (dtype != "u8" && dtype != "i16") {
    throw VolumeFormatError(Kind::malformed_header, header_begin, "unknown dtype \"" + dtype + "\"");
  }

  const std::size_t payload = nl + 1;
  const std::size_t width = dtype == "u8" ? 1 : 2;
  const std::size_t need = dims.size() * width;
  const std::size_t have = bytes.size() - payload;
  if (have < need) {
    throw VolumeFormatError(Kind::truncated, bytes.size(),
                            "truncated buffer: need " + std::to_string(need) + " bytes, have " + std::to_string(have));
  }
  if (have > need) {
    throw VolumeFormatError(Kind::trailing_bytes, payload + need, "trailing bytes after voxel buffer");
  }

  if (dtype == "u8") {
    std::vector<std::uint8_t> vox(need);
    for (std::size_t i = 0; i < need; ++i) {
      const auto b = static_cast<std::uint8_t>(bytes[payload + i]);
      if (b > 1) {
        throw VolumeFormatError(Kind::bad_voxel_value, payload + i,
                                "mask voxel value " + std::to_string(b) + " outside {0,1}");
      }
      vox[i] = b;
    }
    return MaskVolume(dims, spacing, std::move(vox));
  }
  std::vector<std::int16_t> vox(dims.size());
  for (std::size_t i = 0; i < vox.size(); ++i) {
    const auto lo = static_cast<std::uint8_t>(bytes[payload + 2 * i]);
    const auto hi = static_cast<std::uint8_t>(bytes[payload + 2 * i + 1]);
    vox[i] = static_cast<std::int16_t>(static_cast<std::uint16_t>(lo | (hi << 8)));
  }
  return ImageVolume(dims, spacing, std::move(vox));
}

AnyVolume read_volume(const std::filesystem::path& path) {
  return decode_volume(io::read_file(path));
}

MaskVolume read_mask(const std::filesystem::path& path) {
  auto v = read_volume(path);
  if (auto* m = std::get_if<MaskVolume>(&v)) return std::move(*m);
  throw ShapeError(path.string() + ": expected a u8 mask, found an i16 image");
}

ImageVolume read_image(const std::filesystem::path& path) {
  auto v = read_volume(path);
  if (auto* m = std::get_if<ImageVolume>(&v)) return std::move(*m);
  throw ShapeError(path.string() + ": expected an i16 image, found a u8 mask");
}

void write_volume(const MaskVolume& v, const std::filesystem::path& path) {
  io::atomic_write(path, encode_volume(v));
}

void write_volume(const ImageVolume& v, const std::filesystem::path& path) {
  io::atomic_write(path, encode_volume(v));
}

}  // namespace probe
