#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "probe/dataset.hpp"
#include "probe/promptgen.hpp"
#include "probe/volume.hpp"

namespace probe::phantom {

/// The six thoracic regions of the synthetic phantom, as fixed boxes.
enum class Region {
  left_upper_lobe,
  left_lower_lobe,
  right_upper_lobe,
  right_middle_lobe,
  right_lower_lobe,
  mediastinum,
};

inline constexpr std::array<Region, 6> kRegions = {
    Region::left_upper_lobe,  Region::left_lower_lobe,  Region::right_upper_lobe,
    Region::right_middle_lobe, Region::right_lower_lobe, Region::mediastinum,
};

std::string_view label(Region r);
std::optional<Region> region_from_label(std::string_view label);
/// Side of the chest a region belongs to; empty for the mediastinum.
std::optional<Laterality> side_of(Region r);

/// Half-open voxel box [x0,x1) x [y0,y1) x [z0,z1).
struct Box {
  std::int64_t x0 = 0, x1 = 0, y0 = 0, y1 = 0, z0 = 0, z1 = 0;

  bool contains(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return x >= x0 && x < x1 && y >= y0 && y < y1 && z >= z0 && z < z1;
  }
  bool empty() const { return x1 <= x0 || y1 <= y0 || z1 <= z0; }
};

/// Region boxes for a grid. x is split right lung | mediastinum | left lung;
/// z splits lobes (upper lobes at high z).
struct RegionMap {
  std::array<Box, 6> boxes;
  Box body;

  static RegionMap standard(const Dims& dims);
  const Box& box(Region r) const { return boxes[static_cast<std::size_t>(r)]; }
  /// Region containing the voxel, if any.
  std::optional<Region> locate(std::int64_t x, std::int64_t y, std::int64_t z) const;
};

struct Voxel {
  std::int64_t x = 0, y = 0, z = 0;
};

/// Filled ellipsoid: voxel set iff sum(((c_i - center_i) / r_i)^2) <= 1.
/// A zero radius restricts that axis to the center plane. Clipped to the grid.
MaskVolume lesion_mask(Voxel center, Voxel radii, const Dims& dims, const Spacing& spacing = {});

struct StageGroup {
  std::string overall, t, n, m;
};

struct PhantomSpec {
  Dims dims{64, 64, 64};
  Spacing spacing{1.5, 1.5, 1.5};
  std::size_t n_cases = 25;
  std::int64_t radius_min = 3;
  std::int64_t radius_max = 6;
  std::vector<std::string> histologies = {"adenocarcinoma", "squamous cell carcinoma", "large cell carcinoma",
                                          "adenosquamous carcinoma", "sarcomatoid carcinoma"};
  std::vector<StageGroup> stages = {
      {"IA", "T1b", "N0", "M0"},  {"IB", "T2a", "N0", "M0"},   {"IIA", "T2b", "N0", "M0"},
      {"IIB", "T3", "N0", "M0"},  {"IIIA", "T2a", "N2", "M0"}, {"IIIB", "T3", "N2", "M0"},
      {"IIIC", "T4", "N3", "M0"}, {"IVA", "T2a", "N1", "M1a"}, {"IVB", "T3", "N2", "M1c"},
  };
  std::vector<int> ages = {48, 52, 57, 61, 63, 66, 67, 70, 72, 74, 78};
  std::vector<Sex> sexes = {Sex::male, Sex::female};
};

inline constexpr std::int16_t kBackgroundHu = -800;
inline constexpr std::int16_t kBodyHu = 0;
inline constexpr std::int16_t kLesionHu = 40;

/// Generates `spec.n_cases` phantoms under `out_dir` (images/, gtv/,
/// manifest.json). Each case draws from its own splitmix64 substream seeded
/// with splitmix64(seed ^ case_index), so the tree is a pure function of
/// (spec, seed).
std::vector<CaseRef> generate_phantom_set(const PhantomSpec& spec, std::uint64_t seed,
                                          const std::filesystem::path& out_dir);

// ---------------------------------------------------------------------------
// Location grounding used by the mock models
// ---------------------------------------------------------------------------

enum class Specificity { none, any, organ, side, region };

struct ParsedLocation {
  Specificity level = Specificity::none;
  std::optional<Laterality> side;
  std::optional<Region> region;
  /// The phrase that matched, lowercased.
  std::string phrase;
};

/// Case-insensitive search for region names, "left/right lung", organ terms
/// and bare tumor terms; the most specific (then longest) match wins.
ParsedLocation parse_location(std::string_view prompt);

// ---------------------------------------------------------------------------
// Mock models
// ---------------------------------------------------------------------------

enum class MockType { location_oracle, prompt_agnostic, null_model, noisy_oracle };

std::string_view to_string(MockType t);
/// Accepts the canonical names plus "identity" (prompt_agnostic) and "null".
MockType parse_mock_type(std::string_view s);

struct MockKind {
  MockType type = MockType::location_oracle;
  /// location_oracle: base voxel dropout probability for a matched prompt.
  double noise = 0.1;
  /// location_oracle: probability a mismatched prompt yields an empty mask
  /// rather than a small blob in the named region.
  double mismatch_zero_prob = 0.5;
  /// noisy_oracle: number of 6-connected dilation (or erosion) steps.
  int radius = 1;
  bool erode = false;
};

/// Runs a built-in mock. location_oracle depends on the prompt only through
/// parse_location, and its randomness is seeded from (seed, case id, parsed
/// location), so edits to non-location attributes leave its output unchanged.
MaskVolume mock_segment(const MockKind& kind, const ImageVolume& image, const MaskVolume& truth,
                        const PromptAttributes& attrs, std::string_view prompt, std::uint64_t seed);

/// One 6-connected morphological step repeated `steps` times.
MaskVolume dilate(const MaskVolume& m, int steps);
MaskVolume erode(const MaskVolume& m, int steps);

}  // namespace probe::phantom
