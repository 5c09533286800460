#include "probe/phantom.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>

#include "probe/rng.hpp"

namespace probe::phantom {

namespace fs = std::filesystem;

namespace {

// Boundaries in percent of each axis.
std::int64_t at_percent(std::int64_t n, std::int64_t pct) { return n * pct / 100; }

Box percent_box(const Dims& d, std::int64_t x0, std::int64_t x1, std::int64_t y0, std::int64_t y1,
                std::int64_t z0, std::int64_t z1) {
  return {at_percent(d.nx, x0), at_percent(d.nx, x1), at_percent(d.ny, y0),
          at_percent(d.ny, y1), at_percent(d.nz, z0), at_percent(d.nz, z1)};
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

struct Phrase {
  std::string_view text;
  Specificity level;
  std::optional<Laterality> side;
  std::optional<Region> region;
};

constexpr std::array<Phrase, 14> kPhrases = {{
    {"left upper lobe", Specificity::region, Laterality::left, Region::left_upper_lobe},
    {"left lower lobe", Specificity::region, Laterality::left, Region::left_lower_lobe},
    {"right upper lobe", Specificity::region, Laterality::right, Region::right_upper_lobe},
    {"right middle lobe", Specificity::region, Laterality::right, Region::right_middle_lobe},
    {"right lower lobe", Specificity::region, Laterality::right, Region::right_lower_lobe},
    {"mediastinum", Specificity::region, std::nullopt, Region::mediastinum},
    {"left lung", Specificity::side, Laterality::left, std::nullopt},
    {"right lung", Specificity::side, Laterality::right, std::nullopt},
    {"lung", Specificity::organ, std::nullopt, std::nullopt},
    {"thorax", Specificity::organ, std::nullopt, std::nullopt},
    {"thoracic", Specificity::organ, std::nullopt, std::nullopt},
    {"chest", Specificity::organ, std::nullopt, std::nullopt},
    {"tumor", Specificity::any, std::nullopt, std::nullopt},
    {"tumour", Specificity::any, std::nullopt, std::nullopt},
}};

std::optional<Region> lesion_region(const MaskVolume& truth, const RegionMap& map) {
  const Dims& d = truth.dims();
  for (std::int64_t z = 0; z < d.nz; ++z)
    for (std::int64_t y = 0; y < d.ny; ++y)
      for (std::int64_t x = 0; x < d.nx; ++x)
        if (truth.at(x, y, z)) return map.locate(x, y, z);
  return std::nullopt;
}

MaskVolume dropout(const MaskVolume& truth, double q, SplitMix64& rng) {
  std::vector<std::uint8_t> vox(truth.voxels().begin(), truth.voxels().end());
  for (auto& v : vox) {
    if (v && rng.uniform() < q) v = 0;
  }
  return MaskVolume(truth.dims(), truth.spacing(), std::move(vox));
}

MaskVolume blob_in(const Box& box, const Dims& dims, const Spacing& spacing) {
  const Voxel center{(box.x0 + box.x1 - 1) / 2, (box.y0 + box.y1 - 1) / 2, (box.z0 + box.z1 - 1) / 2};
  const auto half = [](std::int64_t lo, std::int64_t hi) { return std::clamp<std::int64_t>((hi - lo - 1) / 2, 0, 2); };
  const Voxel radii{half(box.x0, box.x1), half(box.y0, box.y1), half(box.z0, box.z1)};
  MaskVolume m = lesion_mask(center, radii, dims, spacing);
  for (std::int64_t z = 0; z < dims.nz; ++z)
    for (std::int64_t y = 0; y < dims.ny; ++y)
      for (std::int64_t x = 0; x < dims.nx; ++x)
        if (!box.contains(x, y, z)) m.set(x, y, z, false);
  return m;
}

MaskVolume morph(const MaskVolume& m, bool grow) {
  const Dims& d = m.dims();
  MaskVolume out = m;
  static constexpr std::array<std::array<int, 3>, 6> kNeighbors = {
      {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};
  for (std::int64_t z = 0; z < d.nz; ++z)
    for (std::int64_t y = 0; y < d.ny; ++y)
      for (std::int64_t x = 0; x < d.nx; ++x) {
        if (m.at(x, y, z) == grow) continue;
        for (const auto& [dx, dy, dz] : kNeighbors) {
          const std::int64_t nx = x + dx, ny = y + dy, nz = z + dz;
          // Outside the grid counts as background.
          const bool neighbor = d.contains(nx, ny, nz) && m.at(nx, ny, nz);
          if (neighbor == grow) {
            out.set(x, y, z, grow);
            break;
          }
        }
      }
  return out;
}

}  // namespace

std::string_view label(Region r) {
  switch (r) {
    case Region::left_upper_lobe: return "left upper lobe";
    case Region::left_lower_lobe: return "left lower lobe";
    case Region::right_upper_lobe: return "right upper lobe";
    case Region::right_middle_lobe: return "right middle lobe";
    case Region::right_lower_lobe: return "right lower lobe";
    case Region::mediastinum: return "mediastinum";
  }
  return "?";
}

std::optional<Region> region_from_label(std::string_view text) {
  for (Region r : kRegions) {
    if (label(r) == text) return r;
  }
  return std::nullopt;
}

std::optional<Laterality> side_of(Region r) {
  switch (r) {
    case Region::left_upper_lobe:
    case Region::left_lower_lobe: return Laterality::left;
    case Region::right_upper_lobe:
    case Region::right_middle_lobe:
    case Region::right_lower_lobe: return Laterality::right;
    case Region::mediastinum: return std::nullopt;
  }
  return std::nullopt;
}

RegionMap RegionMap::standard(const Dims& d) {
  RegionMap m;
  m.body = percent_box(d, 5, 95, 15, 85, 5, 95);
  m.boxes[static_cast<std::size_t>(Region::left_upper_lobe)] = percent_box(d, 60, 90, 20, 80, 50, 90);
  m.boxes[static_cast<std::size_t>(Region::left_lower_lobe)] = percent_box(d, 60, 90, 20, 80, 10, 50);
  m.boxes[static_cast<std::size_t>(Region::right_upper_lobe)] = percent_box(d, 10, 40, 20, 80, 62, 90);
  m.boxes[static_cast<std::size_t>(Region::right_middle_lobe)] = percent_box(d, 10, 40, 20, 80, 36, 62);
  m.boxes[static_cast<std::size_t>(Region::right_lower_lobe)] = percent_box(d, 10, 40, 20, 80, 10, 36);
  m.boxes[static_cast<std::size_t>(Region::mediastinum)] = percent_box(d, 40, 60, 20, 80, 10, 90);
  return m;
}

std::optional<Region> RegionMap::locate(std::int64_t x, std::int64_t y, std::int64_t z) const {
  for (Region r : kRegions) {
    if (box(r).contains(x, y, z)) return r;
  }
  return std::nullopt;
}

MaskVolume lesion_mask(Voxel center, Voxel radii, const Dims& dims, const Spacing& spacing) {
  if (!dims.contains(center.x, center.y, center.z)) {
    throw ShapeError("lesion center (" + std::to_string(center.x) + "," + std::to_string(center.y) + "," +
                     std::to_string(center.z) + ") outside dims " + dims.str());
  }
  if (radii.x < 0 || radii.y < 0 || radii.z < 0) throw DomainError("lesion radii must be >= 0");
  MaskVolume m(dims, spacing);
  const auto term = [](std::int64_t off, std::int64_t r) {
    if (r == 0) return off == 0 ? 0.0 : 2.0;
    const double t = static_cast<double>(off) / static_cast<double>(r);
    return t * t;
  };
  const std::int64_t z0 = std::max<std::int64_t>(0, center.z - radii.z);
  const std::int64_t z1 = std::min(dims.nz - 1, center.z + radii.z);
  const std::int64_t y0 = std::max<std::int64_t>(0, center.y - radii.y);
  const std::int64_t y1 = std::min(dims.ny - 1, center.y + radii.y);
  const std::int64_t x0 = std::max<std::int64_t>(0, center.x - radii.x);
  const std::int64_t x1 = std::min(dims.nx - 1, center.x + radii.x);
  for (std::int64_t z = z0; z <= z1; ++z)
    for (std::int64_t y = y0; y <= y1; ++y)
      for (std::int64_t x = x0; x <= x1; ++x) {
        const double s = term(x - center.x, radii.x) + term(y - center.y, radii.y) + term(z - center.z, radii.z);
        if (s <= 1.0) m.set(x, y, z, true);
      }
  return m;
}

std::vector<CaseRef> generate_phantom_set(const PhantomSpec& spec, std::uint64_t seed, const fs::path& out_dir) {
  if (spec.radius_min < 0 || spec.radius_max < spec.radius_min) throw ConfigError("phantom: bad lesion radius range");
  if (spec.histologies.empty() || spec.stages.empty() || spec.ages.empty() || spec.sexes.empty()) {
    throw ConfigError("phantom: attribute pools must be nonempty");
  }
  const RegionMap map = RegionMap::standard(spec.dims);
  for (Region r : kRegions) {
    if (map.box(r).empty()) throw ConfigError("phantom: dims " + spec.dims.str() + " too small for region boxes");
  }

  std::vector<CaseRef> cases;
  cases.reserve(spec.n_cases);
  for (std::size_t i = 0; i < spec.n_cases; ++i) {
    SplitMix64 rng(splitmix64_next(RngState{seed ^ static_cast<std::uint64_t>(i)}).second);

    const Region region = kRegions[rng.below(kRegions.size())];
    const Box& box = map.box(region);
    const auto draw_axis = [&](std::int64_t lo, std::int64_t hi, std::int64_t& center, std::int64_t& radius) {
      radius = std::min(rng.range(spec.radius_min, spec.radius_max), (hi - lo - 1) / 2);
      center = rng.range(lo + radius, hi - 1 - radius);
    };
    Voxel center, radii;
    draw_axis(box.x0, box.x1, center.x, radii.x);
    draw_axis(box.y0, box.y1, center.y, radii.y);
    draw_axis(box.z0, box.z1, center.z, radii.z);

    char id[32];
    std::snprintf(id, sizeof id, "phantom_%03zu", i + 1);

    PromptAttributes a;
    a.case_id = id;
    a.histology = spec.histologies[rng.below(spec.histologies.size())];
    const StageGroup& stage = spec.stages[rng.below(spec.stages.size())];
    a.overall_stage = stage.overall;
    a.t_stage = stage.t;
    a.n_stage = stage.n;
    a.m_stage = stage.m;
    a.age = spec.ages[rng.below(spec.ages.size())];
    a.sex = spec.sexes[rng.below(spec.sexes.size())];
    const bool coin = rng.below(2) == 0;
    a.laterality = side_of(region).value_or(coin ? Laterality::left : Laterality::right);
    a.location = label(region);

    const MaskVolume gtv = lesion_mask(center, radii, spec.dims, spec.spacing);
    ImageVolume image(spec.dims, spec.spacing, kBackgroundHu);
    for (std::int64_t z = 0; z < spec.dims.nz; ++z)
      for (std::int64_t y = 0; y < spec.dims.ny; ++y)
        for (std::int64_t x = 0; x < spec.dims.nx; ++x) {
          if (gtv.at(x, y, z)) {
            image.at(x, y, z) = kLesionHu;
          } else if (map.body.contains(x, y, z)) {
            image.at(x, y, z) = kBodyHu;
          }
        }

    CaseRef c;
    c.case_id = id;
    c.image = out_dir / "images" / (std::string(id) + ".pvol");
    c.gtv = out_dir / "gtv" / (std::string(id) + ".pvol");
    c.attributes = std::move(a);
    write_volume(image, c.image);
    write_volume(gtv, c.gtv);
    cases.push_back(std::move(c));
  }
  save_manifest(cases, out_dir / "manifest.json");
  return cases;
}

ParsedLocation parse_location(std::string_view prompt) {
  const std::string text = lower(prompt);
  ParsedLocation best;
  std::size_t best_pos = std::string::npos;
  for (const Phrase& p : kPhrases) {
    const std::size_t pos = text.find(p.text);
    if (pos == std::string::npos) continue;
    const bool better = p.level > best.level ||
                        (p.level == best.level && (p.text.size() > best.phrase.size() ||
                                                   (p.text.size() == best.phrase.size() && pos < best_pos)));
    if (better) {
      best = {p.level, p.side, p.region, std::string(p.text)};
      best_pos = pos;
    }
  }
  return best;
}

std::string_view to_string(MockType t) {
  switch (t) {
    case MockType::location_oracle: return "location_oracle";
    case MockType::prompt_agnostic: return "prompt_agnostic";
    case MockType::null_model: return "null_model";
    case MockType::noisy_oracle: return "noisy_oracle";
  }
  return "?";
}

MockType parse_mock_type(std::string_view s) {
  if (s == "location_oracle") return MockType::location_oracle;
  if (s == "prompt_agnostic" || s == "identity") return MockType::prompt_agnostic;
  if (s == "null_model" || s == "null") return MockType::null_model;
  if (s == "noisy_oracle") return MockType::noisy_oracle;
  throw ConfigError("unknown mock kind \"" + std::string(s) + "\"");
}

MaskVolume dilate(const MaskVolume& m, int steps) {
  MaskVolume out = m;
  for (int i = 0; i < steps; ++i) out = morph(out, true);
  return out;
}

MaskVolume erode(const MaskVolume& m, int steps) {
  MaskVolume out = m;
  for (int i = 0; i < steps; ++i) out = morph(out, false);
  return out;
}

MaskVolume mock_segment(const MockKind& kind, const ImageVolume& image, const MaskVolume& truth,
                        const PromptAttributes& attrs, std::string_view prompt, std::uint64_t seed) {
  if (image.dims() != truth.dims()) {
    throw ShapeError("mock: image dims " + image.dims().str() + " differ from truth dims " + truth.dims().str());
  }
  const MaskVolume empty(truth.dims(), truth.spacing());
  switch (kind.type) {
    case MockType::null_model: return empty;
    case MockType::prompt_agnostic: return truth;
    case MockType::noisy_oracle: return kind.erode ? erode(truth, kind.radius) : dilate(truth, kind.radius);
    case MockType::location_oracle: break;
  }

  const RegionMap map = RegionMap::standard(truth.dims());
  const auto lesion = lesion_region(truth, map);
  const ParsedLocation loc = parse_location(prompt);
  if (!lesion || loc.level == Specificity::none) return empty;

  SplitMix64 rng(splitmix64_next(RngState{seed ^ fnv1a64(attrs.case_id + '\x1f' + loc.phrase)}).second);
  const auto keep = [&](double weight) { return dropout(truth, std::min(1.0, kind.noise * weight), rng); };
  const auto mismatch = [&](const Box& named) {
    if (rng.uniform() < kind.mismatch_zero_prob) return empty;
    return blob_in(named, truth.dims(), truth.spacing());
  };

  switch (loc.level) {
    case Specificity::none: return empty;
    case Specificity::any: return keep(4.0);
    case Specificity::organ: return keep(2.0);
    case Specificity::side:
      if (side_of(*lesion) == loc.side) return keep(1.5);
      return mismatch(map.box(*loc.side == Laterality::left ? Region::left_upper_lobe : Region::right_upper_lobe));
    case Specificity::region:
      if (*lesion == *loc.region) return keep(1.0);
      return mismatch(map.box(*loc.region));
  }
  return empty;
}

}  // namespace probe::phantom
