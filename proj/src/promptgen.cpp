#include "probe/promptgen.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <numeric>

namespace probe {

namespace {

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view s, const std::array<Enum, N>& all, std::string_view what) {
  for (Enum e : all) {
    if (to_string(e) == s) return e;
  }
  throw ConfigError("unknown " + std::string(what) + " \"" + std::string(s) + "\"");
}

std::string slot_value(std::string_view name, const PromptAttributes& a) {
  if (name == "age") return a.age > 0 ? std::to_string(a.age) : std::string();
  if (name == "sex") return std::string(to_string(a.sex));
  if (name == "overall_stage") return a.overall_stage;
  if (name == "t") return a.t_stage;
  if (name == "n") return a.n_stage;
  if (name == "m") return a.m_stage;
  if (name == "histology") return a.histology;
  if (name == "location") return a.location;
  if (name == "laterality") return std::string(to_string(a.laterality));
  throw ConfigError("unknown template placeholder {" + std::string(name) + "}");
}

// Attribute field name reported in incomplete-attribute errors.
std::string_view field_name(std::string_view slot) {
  if (slot == "t") return "t_stage";
  if (slot == "n") return "n_stage";
  if (slot == "m") return "m_stage";
  return slot;
}

void require_full(const PromptAttributes& attrs, const PromptTemplates& templates) {
  auto missing = missing_fields(templates.full, attrs);
  for (std::string_view f : {"histology", "overall_stage", "location"}) {
    if (std::find(missing.begin(), missing.end(), f) == missing.end() &&
        slot_value(f, attrs).empty()) {
      missing.emplace_back(f);
    }
  }
  if (!missing.empty()) throw IncompleteAttributesError(attrs.case_id, std::move(missing));
}

PromptVariant make(VariantKind kind, std::string text, const PromptAttributes& attrs) {
  PromptVariant v;
  v.kind = kind;
  v.text = std::move(text);
  v.provenance = attrs;
  return v;
}

std::string current_value(const PromptAttributes& a, PerturbationCategory c) {
  switch (c) {
    case PerturbationCategory::tumor_type: return a.histology;
    case PerturbationCategory::overall_stage: return a.overall_stage;
    case PerturbationCategory::t_stage: return a.t_stage;
    case PerturbationCategory::n_stage: return a.n_stage;
    case PerturbationCategory::m_stage: return a.m_stage;
    case PerturbationCategory::age: return std::to_string(a.age);
    case PerturbationCategory::sex: return std::string(to_string(a.sex));
    case PerturbationCategory::location: return a.location;
    case PerturbationCategory::control: return {};
  }
  return {};
}

PromptAttributes substitute(PromptAttributes a, PerturbationCategory c, std::string_view value) {
  switch (c) {
    case PerturbationCategory::tumor_type: a.histology = value; break;
    case PerturbationCategory::overall_stage: a.overall_stage = value; break;
    case PerturbationCategory::t_stage: a.t_stage = value; break;
    case PerturbationCategory::n_stage: a.n_stage = value; break;
    case PerturbationCategory::m_stage: a.m_stage = value; break;
    case PerturbationCategory::age: {
      int age = 0;
      auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), age);
      if (ec != std::errc{} || p != value.data() + value.size() || age <= 0) {
        throw ConfigError("age substitute \"" + std::string(value) + "\" is not a positive integer");
      }
      a.age = age;
      break;
    }
    case PerturbationCategory::sex: a.sex = parse_sex(value); break;
    case PerturbationCategory::location:
      a.location = value;
      // Laterality is derived from location; it is not a slot of the full template.
      if (auto lat = laterality_of(value)) a.laterality = *lat;
      break;
    case PerturbationCategory::control:
      throw ConfigError("control prompts are fixed, not substitutions");
  }
  return a;
}

}  // namespace

std::string_view to_string(Sex s) { return s == Sex::male ? "male" : "female"; }
std::string_view to_string(Laterality l) { return l == Laterality::left ? "left" : "right"; }

Sex parse_sex(std::string_view s) {
  if (s == "male") return Sex::male;
  if (s == "female") return Sex::female;
  throw ConfigError("unknown sex \"" + std::string(s) + "\"");
}

Laterality parse_laterality(std::string_view s) {
  if (s == "left") return Laterality::left;
  if (s == "right") return Laterality::right;
  throw ConfigError("unknown laterality \"" + std::string(s) + "\"");
}

std::optional<Laterality> laterality_of(std::string_view location) {
  if (location.starts_with("left ")) return Laterality::left;
  if (location.starts_with("right ")) return Laterality::right;
  return std::nullopt;
}

std::string_view to_string(FragmentCategory c) {
  switch (c) {
    case FragmentCategory::diagnosis: return "diagnosis";
    case FragmentCategory::demographics: return "demographics";
    case FragmentCategory::tnm: return "tnm";
    case FragmentCategory::stage: return "stage";
    case FragmentCategory::diagnosis_plus_stage: return "diagnosis_plus_stage";
    case FragmentCategory::generic: return "generic";
    case FragmentCategory::anatomical: return "anatomical";
    case FragmentCategory::irrelevant: return "irrelevant";
  }
  return "?";
}

std::string_view to_string(PerturbationCategory c) {
  switch (c) {
    case PerturbationCategory::tumor_type: return "tumor_type";
    case PerturbationCategory::overall_stage: return "overall_stage";
    case PerturbationCategory::t_stage: return "t_stage";
    case PerturbationCategory::n_stage: return "n_stage";
    case PerturbationCategory::m_stage: return "m_stage";
    case PerturbationCategory::age: return "age";
    case PerturbationCategory::sex: return "sex";
    case PerturbationCategory::location: return "location";
    case PerturbationCategory::control: return "control";
  }
  return "?";
}

std::string_view to_string(LadderLevel l) {
  static constexpr std::array<std::string_view, 7> kNames = {"L0", "L1", "L2", "L3", "L4", "L5", "L6"};
  return kNames[static_cast<std::size_t>(l)];
}

std::string_view to_string(VariantKind k) {
  switch (k) {
    case VariantKind::full: return "full";
    case VariantKind::fragment: return "fragment";
    case VariantKind::perturbed: return "perturbed";
    case VariantKind::ladder: return "ladder";
    case VariantKind::swap: return "swap";
    case VariantKind::irrelevant: return "irrelevant";
    case VariantKind::generic: return "generic";
  }
  return "?";
}

FragmentCategory parse_fragment_category(std::string_view s) {
  return parse_enum(s, kFragmentCategories, "fragment category");
}

PerturbationCategory parse_perturbation_category(std::string_view s) {
  return parse_enum(s, kPerturbationCategories, "perturbation category");
}

SubstitutionPool default_substitution_pool() {
  return {
      {PerturbationCategory::tumor_type,
       {"adenocarcinoma", "squamous cell carcinoma", "large cell carcinoma", "adenosquamous carcinoma",
        "sarcomatoid carcinoma"}},
      {PerturbationCategory::overall_stage, {"I", "II", "III", "IV"}},
      {PerturbationCategory::t_stage, {"T1", "T2", "T3", "T4"}},
      {PerturbationCategory::n_stage, {"N0", "N1", "N2", "N3"}},
      {PerturbationCategory::m_stage, {"M0", "M1"}},
      {PerturbationCategory::age, {"45", "55", "65", "75"}},
      {PerturbationCategory::sex, {"male", "female"}},
      {PerturbationCategory::location,
       {"left upper lobe", "left lower lobe", "right upper lobe", "right middle lobe", "right lower lobe",
        "mediastinum"}},
  };
}

IncompleteAttributesError::IncompleteAttributesError(const std::string& case_id, std::vector<std::string> missing)
    : ConfigError([&] {
        std::string msg = "incomplete attributes for case \"" + case_id + "\": missing";
        for (const auto& f : missing) msg += " " + f;
        return msg;
      }()),
      missing_(std::move(missing)) {}

RenderedTemplate render_template(std::string_view tpl, const PromptAttributes& attrs) {
  RenderedTemplate out;
  std::size_t i = 0;
  while (i < tpl.size()) {
    if (tpl[i] == '{') {
      const std::size_t close = tpl.find('}', i);
      if (close == std::string_view::npos) throw ConfigError("unterminated placeholder in template");
      const std::string_view name = tpl.substr(i + 1, close - i - 1);
      const std::string value = slot_value(name, attrs);
      SlotSpan span{std::string(name), out.text.size(), 0};
      out.text += value;
      span.end = out.text.size();
      out.slots.push_back(std::move(span));
      i = close + 1;
    } else {
      out.text.push_back(tpl[i++]);
    }
  }
  return out;
}

std::vector<std::string> missing_fields(std::string_view tpl, const PromptAttributes& attrs) {
  std::vector<std::string> missing;
  for (const auto& slot : render_template(tpl, attrs).slots) {
    if (slot.begin == slot.end) {
      std::string f(field_name(slot.name));
      if (std::find(missing.begin(), missing.end(), f) == missing.end()) missing.push_back(std::move(f));
    }
  }
  return missing;
}

PromptVariant render_full(const PromptAttributes& attrs, const PromptTemplates& templates) {
  require_full(attrs, templates);
  return make(VariantKind::full, render_template(templates.full, attrs).text, attrs);
}

std::vector<PromptVariant> render_fragments(const PromptAttributes& attrs, const PromptTemplates& templates) {
  require_full(attrs, templates);
  std::vector<PromptVariant> out;
  out.reserve(kFragmentCategories.size());
  for (FragmentCategory c : kFragmentCategories) {
    std::string_view tpl;
    switch (c) {
      case FragmentCategory::diagnosis: tpl = "{histology}"; break;
      case FragmentCategory::demographics: tpl = "{age}-year-old {sex}"; break;
      case FragmentCategory::tnm: tpl = "{t}{n}{m}"; break;
      case FragmentCategory::stage: tpl = "stage {overall_stage}"; break;
      case FragmentCategory::diagnosis_plus_stage: tpl = "{histology}, stage {overall_stage}"; break;
      case FragmentCategory::generic: tpl = kGenericPrompt; break;
      case FragmentCategory::anatomical: tpl = "tumor in the {location}"; break;
      case FragmentCategory::irrelevant: tpl = kIrrelevantPrompt; break;
    }
    auto v = make(VariantKind::fragment, render_template(tpl, attrs).text, attrs);
    v.fragment = c;
    out.push_back(std::move(v));
  }
  return out;
}

PromptVariant perturb(const PromptAttributes& attrs, PerturbationCategory category, std::string_view value,
                      const PromptTemplates& templates) {
  require_full(attrs, templates);
  PromptAttributes edited = substitute(attrs, category, value);
  auto v = make(VariantKind::perturbed, render_template(templates.full, edited).text, edited);
  v.perturbation = category;
  v.substitution = value;
  return v;
}

std::vector<PromptVariant> render_perturbations(const PromptAttributes& attrs, PerturbationCategory category,
                                                const SubstitutionPool& pool, SplitMix64& rng,
                                                const PromptTemplates& templates, std::optional<std::size_t> cap) {
  require_full(attrs, templates);
  std::vector<PromptVariant> out;

  if (category == PerturbationCategory::control) {
    PromptAttributes other = attrs;
    other.location = templates.control_organ;
    const std::array<std::pair<std::string_view, std::string>, 3> controls = {{
        {"generic", std::string(kGenericPrompt)},
        {"irrelevant", std::string(kIrrelevantPrompt)},
        {"other_organ", render_template(templates.full, other).text},
    }};
    for (const auto& [label, text] : controls) {
      auto v = make(VariantKind::perturbed, text, attrs);
      v.perturbation = category;
      v.substitution = label;
      out.push_back(std::move(v));
    }
    return out;
  }

  const std::string original = current_value(attrs, category);
  std::vector<std::string> candidates;
  if (auto it = pool.find(category); it != pool.end()) {
    for (const auto& value : it->second) {
      if (value != original && std::find(candidates.begin(), candidates.end(), value) == candidates.end()) {
        candidates.push_back(value);
      }
    }
  }
  if (candidates.empty()) {
    throw PoolExhaustedError("no substitute for " + std::string(to_string(category)) + " distinct from \"" +
                             original + "\" in case \"" + attrs.case_id + "\"");
  }
  if (cap && *cap < candidates.size()) {
    // Partial Fisher-Yates: the first `cap` slots become a uniform sample.
    for (std::size_t i = 0; i < *cap; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(candidates.size() - i));
      std::swap(candidates[i], candidates[j]);
    }
    candidates.resize(*cap);
  }
  out.reserve(candidates.size());
  for (const auto& value : candidates) out.push_back(perturb(attrs, category, value, templates));
  return out;
}

std::vector<PromptVariant> render_ladder(const PromptAttributes& attrs, const PromptTemplates& templates) {
  require_full(attrs, templates);
  const std::string full = render_template(templates.full, attrs).text;
  std::vector<PromptVariant> out;
  out.reserve(kLadderLevels.size());
  for (LadderLevel level : kLadderLevels) {
    std::string text;
    switch (level) {
      case LadderLevel::L0: text = kBareTumorPrompt; break;
      case LadderLevel::L1: text = kGenericPrompt; break;
      case LadderLevel::L2: text = render_template("tumor in the {laterality} lung", attrs).text; break;
      case LadderLevel::L3: text = render_template("tumor in the {location}", attrs).text; break;
      case LadderLevel::L4: text = render_template("{histology}, stage {overall_stage}, {t}{n}{m}", attrs).text; break;
      case LadderLevel::L5: text = full; break;
      case LadderLevel::L6: text = full + " " + templates.fabricated_detail; break;
    }
    auto v = make(VariantKind::ladder, std::move(text), attrs);
    v.level = level;
    out.push_back(std::move(v));
  }
  return out;
}

SwapPlan swap_plan(std::span<const PromptAttributes> cases, const PromptTemplates& templates) {
  if (cases.size() < 2) {
    throw InsufficientCasesError("swap plan needs at least 2 cases, got " + std::to_string(cases.size()));
  }
  std::vector<PromptVariant> full;
  full.reserve(cases.size());
  for (const auto& c : cases) full.push_back(render_full(c, templates));

  SwapPlan plan;
  for (const auto& c : cases) plan.case_ids.push_back(c.case_id);
  plan.cells.reserve(cases.size() * cases.size() + cases.size());
  for (std::size_t i = 0; i < cases.size(); ++i) {
    for (std::size_t j = 0; j < cases.size(); ++j) {
      PromptVariant v = full[j];
      v.kind = VariantKind::swap;
      v.source_case = cases[j].case_id;
      plan.cells.push_back({i, j, std::move(v)});
    }
    auto g = make(VariantKind::generic, std::string(kGenericPrompt), cases[i]);
    plan.cells.push_back({i, std::nullopt, std::move(g)});
  }
  return plan;
}

std::string normalize_prompt(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

}  // namespace probe
