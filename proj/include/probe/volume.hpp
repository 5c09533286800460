#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "probe/errors.hpp"

namespace probe {

struct Dims {
  std::int64_t nx = 1;
  std::int64_t ny = 1;
  std::int64_t nz = 1;

  std::size_t size() const { return static_cast<std::size_t>(nx * ny * nz); }
  std::size_t index(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return static_cast<std::size_t>(x + nx * (y + ny * z));
  }
  bool contains(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < nx && y < ny && z < nz;
  }
  std::string str() const;
  friend bool operator==(const Dims&, const Dims&) = default;
};

/// Voxel size in millimetres.
struct Spacing {
  double sx = 1.0;
  double sy = 1.0;
  double sz = 1.0;
  friend bool operator==(const Spacing&, const Spacing&) = default;
};

/// Binary segmentation mask, x-fastest dense u8 buffer holding only 0 and 1.
class MaskVolume {
 public:
  MaskVolume(Dims dims, Spacing spacing);
  MaskVolume(Dims dims, Spacing spacing, std::vector<std::uint8_t> voxels);

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  std::span<const std::uint8_t> voxels() const { return voxels_; }

  bool at(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return voxels_[dims_.index(x, y, z)] != 0;
  }
  void set(std::int64_t x, std::int64_t y, std::int64_t z, bool on) {
    voxels_[dims_.index(x, y, z)] = on ? 1 : 0;
  }

  /// Foreground volume in mm^3 (reporting only; Dice ignores spacing).
  double volume_mm3() const;

  friend bool operator==(const MaskVolume&, const MaskVolume&) = default;

 private:
  Dims dims_;
  Spacing spacing_;
  std::vector<std::uint8_t> voxels_;
};

/// HU-like intensity image. Carrier data only; nothing in the harness
/// interprets the intensities.
class ImageVolume {
 public:
  ImageVolume(Dims dims, Spacing spacing, std::int16_t fill = 0);
  ImageVolume(Dims dims, Spacing spacing, std::vector<std::int16_t> voxels);

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  std::span<const std::int16_t> voxels() const { return voxels_; }
  std::int16_t& at(std::int64_t x, std::int64_t y, std::int64_t z) {
    return voxels_[dims_.index(x, y, z)];
  }

  friend bool operator==(const ImageVolume&, const ImageVolume&) = default;

 private:
  Dims dims_;
  Spacing spacing_;
  std::vector<std::int16_t> voxels_;
};

struct DiceScore {
  double value = 0.0;
  bool both_empty = false;
};

/// 2|A∩B| / (|A|+|B|), counted in integers with a single final division.
/// Two empty masks score 1.0 with `both_empty` set.
DiceScore dice(const MaskVolume& a, const MaskVolume& b);

bool is_zero_mask(const MaskVolume& v);
std::uint64_t voxel_count(const MaskVolume& v);

// ---------------------------------------------------------------------------
// PVOL file format
//
//   "PVOL1\n" {"dims":[nx,ny,nz],"spacing":[sx,sy,sz],"dtype":"u8"|"i16"}"\n"
//   raw voxels, x-fastest; u8 for masks, little-endian i16 for images.
// ---------------------------------------------------------------------------

class VolumeFormatError : public Error {
 public:
  enum class Kind { bad_magic, malformed_header, truncated, bad_voxel_value, trailing_bytes };

  VolumeFormatError(Kind kind, std::uint64_t offset, const std::string& detail);

  Kind kind() const { return kind_; }
  std::uint64_t offset() const { return offset_; }

 private:
  Kind kind_;
  std::uint64_t offset_;
};

using AnyVolume = std::variant<MaskVolume, ImageVolume>;

std::string encode_volume(const MaskVolume& v);
std::string encode_volume(const ImageVolume& v);
AnyVolume decode_volume(std::string_view bytes);

AnyVolume read_volume(const std::filesystem::path& path);
/// Reads a file that must hold a u8 mask.
MaskVolume read_mask(const std::filesystem::path& path);
/// Reads a file that must hold an i16 image.
ImageVolume read_image(const std::filesystem::path& path);

void write_volume(const MaskVolume& v, const std::filesystem::path& path);
void write_volume(const ImageVolume& v, const std::filesystem::path& path);

}  // namespace probe
