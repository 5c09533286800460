#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "probe/errors.hpp"
#include "probe/rng.hpp"

namespace probe {

enum class Sex { male, female };
enum class Laterality { left, right };

std::string_view to_string(Sex s);
std::string_view to_string(Laterality l);
Sex parse_sex(std::string_view s);
Laterality parse_laterality(std::string_view s);

/// Structured clinical attributes every prompt variant is rendered from.
struct PromptAttributes {
  std::string case_id;
  std::string histology;
  int age = 0;
  Sex sex = Sex::male;
  std::string t_stage;
  std::string n_stage;
  std::string m_stage;
  std::string overall_stage;
  Laterality laterality = Laterality::left;
  std::string location;
  std::optional<std::string> extra_findings;

  friend bool operator==(const PromptAttributes&, const PromptAttributes&) = default;
};

/// Laterality implied by a "left ..."/"right ..." location, if any.
std::optional<Laterality> laterality_of(std::string_view location);

enum class FragmentCategory {
  diagnosis,
  demographics,
  tnm,
  stage,
  diagnosis_plus_stage,
  generic,
  anatomical,
  irrelevant,
};

inline constexpr std::array<FragmentCategory, 8> kFragmentCategories = {
    FragmentCategory::diagnosis, FragmentCategory::demographics,        FragmentCategory::tnm,
    FragmentCategory::stage,     FragmentCategory::diagnosis_plus_stage, FragmentCategory::generic,
    FragmentCategory::anatomical, FragmentCategory::irrelevant,
};

enum class PerturbationCategory {
  tumor_type,
  overall_stage,
  t_stage,
  n_stage,
  m_stage,
  age,
  sex,
  location,
  control,
};

inline constexpr std::array<PerturbationCategory, 9> kPerturbationCategories = {
    PerturbationCategory::tumor_type, PerturbationCategory::overall_stage, PerturbationCategory::t_stage,
    PerturbationCategory::n_stage,    PerturbationCategory::m_stage,       PerturbationCategory::age,
    PerturbationCategory::sex,        PerturbationCategory::location,      PerturbationCategory::control,
};

enum class LadderLevel { L0, L1, L2, L3, L4, L5, L6 };

inline constexpr std::array<LadderLevel, 7> kLadderLevels = {
    LadderLevel::L0, LadderLevel::L1, LadderLevel::L2, LadderLevel::L3,
    LadderLevel::L4, LadderLevel::L5, LadderLevel::L6,
};

std::string_view to_string(FragmentCategory c);
std::string_view to_string(PerturbationCategory c);
std::string_view to_string(LadderLevel l);
FragmentCategory parse_fragment_category(std::string_view s);
PerturbationCategory parse_perturbation_category(std::string_view s);

enum class VariantKind { full, fragment, perturbed, ladder, swap, irrelevant, generic };
std::string_view to_string(VariantKind k);

struct PromptVariant {
  VariantKind kind = VariantKind::full;
  std::optional<FragmentCategory> fragment;
  std::optional<PerturbationCategory> perturbation;
  /// Replacement value for perturbed variants (control label for the control category).
  std::string substitution;
  std::optional<LadderLevel> level;
  /// Case whose prompt was borrowed, for swap variants.
  std::string source_case;
  std::string text;
  PromptAttributes provenance;
};

inline constexpr std::string_view kGenericPrompt = "lung tumor";
inline constexpr std::string_view kIrrelevantPrompt = "liver cyst";
inline constexpr std::string_view kBareTumorPrompt = "tumor";

/// Rendering configuration. Placeholders: {age} {sex} {overall_stage} {t} {n}
/// {m} {histology} {location} {laterality}.
struct PromptTemplates {
  std::string full = "A {age}-year-old {sex} with stage {overall_stage} ({t}{n}{m}) {histology} in the {location}.";
  /// Appended to the full prompt at L6.
  std::string fabricated_detail = "History notes a remote appendectomy and a 40 pack-year smoking history.";
  /// Non-thoracic site used for the "other organ" control prompt.
  std::string control_organ = "liver";
};

/// Substitute values per perturbation category (control takes none).
using SubstitutionPool = std::map<PerturbationCategory, std::vector<std::string>>;

SubstitutionPool default_substitution_pool();

class IncompleteAttributesError : public ConfigError {
 public:
  IncompleteAttributesError(const std::string& case_id, std::vector<std::string> missing);
  const std::vector<std::string>& missing() const { return missing_; }

 private:
  std::vector<std::string> missing_;
};

class PoolExhaustedError : public Error {
 public:
  using Error::Error;
};

class InsufficientCasesError : public Error {
 public:
  using Error::Error;
};

struct SlotSpan {
  std::string name;
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// A rendered template with the byte span each placeholder expanded into.
struct RenderedTemplate {
  std::string text;
  std::vector<SlotSpan> slots;
};

RenderedTemplate render_template(std::string_view tpl, const PromptAttributes& attrs);

/// The attribute fields `tpl` references that are empty in `attrs`.
std::vector<std::string> missing_fields(std::string_view tpl, const PromptAttributes& attrs);

PromptVariant render_full(const PromptAttributes& attrs, const PromptTemplates& templates = {});

/// One variant per FragmentCategory, in kFragmentCategories order.
std::vector<PromptVariant> render_fragments(const PromptAttributes& attrs, const PromptTemplates& templates = {});

/// The full prompt with one attribute replaced by `value` (identity allowed).
/// Control variants are produced by render_perturbations instead.
PromptVariant perturb(const PromptAttributes& attrs, PerturbationCategory category, std::string_view value,
                      const PromptTemplates& templates = {});

/// Every pool value distinct from the case's own value for `category`, each
/// rendered as a single-attribute edit of the full prompt. When `cap` is set
/// and smaller than the candidate set, a seeded subsample of size `cap` is
/// drawn from `rng`. The control category yields the fixed control prompts.
std::vector<PromptVariant> render_perturbations(const PromptAttributes& attrs, PerturbationCategory category,
                                                const SubstitutionPool& pool, SplitMix64& rng,
                                                const PromptTemplates& templates = {},
                                                std::optional<std::size_t> cap = std::nullopt);

/// L0..L6, from bare "tumor" to the full prompt plus fabricated detail.
std::vector<PromptVariant> render_ladder(const PromptAttributes& attrs, const PromptTemplates& templates = {});

struct SwapCell {
  std::size_t image_index = 0;
  /// Index of the case whose full prompt is used; empty for the generic column.
  std::optional<std::size_t> prompt_index;
  PromptVariant prompt;
};

/// N x N image/prompt grid plus one generic-prompt column, row-major by image:
/// for image i the cells are prompts 0..N-1 followed by the generic prompt.
struct SwapPlan {
  std::vector<std::string> case_ids;
  std::vector<SwapCell> cells;
};

SwapPlan swap_plan(std::span<const PromptAttributes> cases, const PromptTemplates& templates = {});

/// Trim and collapse internal whitespace runs to single spaces. Case is kept.
std::string normalize_prompt(std::string_view text);

}  // namespace probe
