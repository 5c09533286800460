#include <gtest/gtest.h>

#include <set>

#include "probe/promptgen.hpp"
#include "probe/rng.hpp"

using namespace probe;

namespace {

PromptAttributes sample() {
  PromptAttributes a;
  a.case_id = "c1";
  a.histology = "adenocarcinoma";
  a.age = 67;
  a.sex = Sex::male;
  a.t_stage = "T2a";
  a.n_stage = "N1";
  a.m_stage = "M0";
  a.overall_stage = "IIIA";
  a.laterality = Laterality::left;
  a.location = "left upper lobe";
  return a;
}

// Names of the slots of `rendered` overlapping [begin, end); an empty range
// counts slots whose span contains the insertion point.
std::set<std::string> slots_touched(const RenderedTemplate& rendered, std::size_t begin, std::size_t end) {
  std::set<std::string> names;
  for (const auto& s : rendered.slots) {
    const bool hit = begin == end ? (s.begin <= begin && begin <= s.end) : (s.begin < end && begin < s.end);
    if (hit) names.insert(s.name);
  }
  return names;
}

}  // namespace

TEST(RenderFull, TemplateInstantiation) {
  const auto v = render_full(sample());
  EXPECT_EQ(v.text, "A 67-year-old male with stage IIIA (T2aN1M0) adenocarcinoma in the left upper lobe.");
  EXPECT_EQ(v.kind, VariantKind::full);
  EXPECT_EQ(v.provenance, sample());
  EXPECT_EQ(render_full(sample()).text, v.text);
}

TEST(RenderFull, MissingAttributesListedInTemplateOrder) {
  auto a = sample();
  a.histology.clear();
  a.overall_stage.clear();
  try {
    render_full(a);
    FAIL();
  } catch (const IncompleteAttributesError& e) {
    EXPECT_EQ(e.missing(), (std::vector<std::string>{"overall_stage", "histology"}));
  }
}

TEST(RenderFull, CustomTemplate) {
  PromptTemplates t;
  t.full = "{histology}, {laterality} side";
  EXPECT_EQ(render_full(sample(), t).text, "adenocarcinoma, left side");
}

TEST(Fragments, EightInFixedOrder) {
  const auto f = render_fragments(sample());
  ASSERT_EQ(f.size(), 8u);
  for (std::size_t i = 0; i < f.size(); ++i) {
    EXPECT_EQ(f[i].kind, VariantKind::fragment);
    EXPECT_EQ(f[i].fragment, kFragmentCategories[i]);
  }
  EXPECT_EQ(f[0].text, "adenocarcinoma");
  EXPECT_EQ(f[1].text, "67-year-old male");
  EXPECT_EQ(f[2].text, "T2aN1M0");
  EXPECT_EQ(f[3].text, "stage IIIA");
  EXPECT_EQ(f[4].text, "adenocarcinoma, stage IIIA");
  EXPECT_EQ(f[5].text, "lung tumor");
  EXPECT_EQ(f[6].text, "tumor in the left upper lobe");
  EXPECT_EQ(f[7].text, "liver cyst");
}

TEST(Perturbations, LocationSwapKeepsOtherWords) {
  const auto v = perturb(sample(), PerturbationCategory::location, "right lower lobe");
  EXPECT_EQ(v.text, "A 67-year-old male with stage IIIA (T2aN1M0) adenocarcinoma in the right lower lobe.");
  EXPECT_EQ(v.provenance.laterality, Laterality::right);
  EXPECT_EQ(v.substitution, "right lower lobe");
}

TEST(Perturbations, TumorTypeSwap) {
  const auto v = perturb(sample(), PerturbationCategory::tumor_type, "squamous cell carcinoma");
  EXPECT_EQ(v.text, "A 67-year-old male with stage IIIA (T2aN1M0) squamous cell carcinoma in the left upper lobe.");
}

TEST(Perturbations, IdentityPerturbationReproducesFullPrompt) {
  EXPECT_EQ(perturb(sample(), PerturbationCategory::tumor_type, "adenocarcinoma").text, render_full(sample()).text);
}

TEST(Perturbations, PoolWithOnlyOriginalIsExhausted) {
  SubstitutionPool pool;
  pool[PerturbationCategory::tumor_type] = {"adenocarcinoma"};
  SplitMix64 rng(1);
  EXPECT_THROW(render_perturbations(sample(), PerturbationCategory::tumor_type, pool, rng), PoolExhaustedError);
}

TEST(Perturbations, EveryDistinctPoolValueByDefault) {
  const auto pool = default_substitution_pool();
  SplitMix64 rng(1);
  const auto v = render_perturbations(sample(), PerturbationCategory::tumor_type, pool, rng);
  EXPECT_EQ(v.size(), pool.at(PerturbationCategory::tumor_type).size() - 1);
  for (const auto& p : v) EXPECT_NE(p.substitution, "adenocarcinoma");
}

TEST(Perturbations, CapSubsamplesDeterministically) {
  const auto pool = default_substitution_pool();
  SplitMix64 a(9), b(9);
  const auto va = render_perturbations(sample(), PerturbationCategory::location, pool, a, {}, 2);
  const auto vb = render_perturbations(sample(), PerturbationCategory::location, pool, b, {}, 2);
  ASSERT_EQ(va.size(), 2u);
  EXPECT_EQ(va[0].text, vb[0].text);
  EXPECT_EQ(va[1].text, vb[1].text);
  EXPECT_NE(va[0].text, va[1].text);
}

TEST(Perturbations, ControlPrompts) {
  SplitMix64 rng(1);
  const auto v = render_perturbations(sample(), PerturbationCategory::control, default_substitution_pool(), rng);
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v[0].text, "lung tumor");
  EXPECT_EQ(v[1].text, "liver cyst");
  EXPECT_EQ(v[2].text, "A 67-year-old male with stage IIIA (T2aN1M0) adenocarcinoma in the liver.");
}

TEST(Perturbations, SingleEditProperty) {
  // Every non-control perturbation differs from the matched prompt inside
  // exactly one placeholder span, on both the matched and perturbed side.
  const PromptTemplates templates;
  const auto pool = default_substitution_pool();
  const auto matched = render_template(templates.full, sample());
  std::size_t checked = 0;
  for (PerturbationCategory cat : kPerturbationCategories) {
    if (cat == PerturbationCategory::control) continue;
    SplitMix64 rng(3);
    std::vector<PromptVariant> variants;
    try {
      variants = render_perturbations(sample(), cat, pool, rng, templates);
    } catch (const PoolExhaustedError&) {
      continue;
    }
    for (const auto& v : variants) {
      const auto perturbed = render_template(templates.full, v.provenance);
      ASSERT_EQ(perturbed.text, v.text);
      const std::string& a = matched.text;
      const std::string& b = perturbed.text;
      std::size_t prefix = 0;
      while (prefix < a.size() && prefix < b.size() && a[prefix] == b[prefix]) ++prefix;
      std::size_t suffix = 0;
      while (suffix < a.size() - prefix && suffix < b.size() - prefix && a[a.size() - 1 - suffix] == b[b.size() - 1 - suffix]) {
        ++suffix;
      }
      const auto ta = slots_touched(matched, prefix, a.size() - suffix);
      const auto tb = slots_touched(perturbed, prefix, b.size() - suffix);
      const auto& strict = a.size() - suffix > prefix ? ta : tb;
      ASSERT_EQ(strict.size(), 1u) << v.text;
      EXPECT_TRUE(ta.count(*strict.begin()) && tb.count(*strict.begin())) << v.text;
      ++checked;
    }
  }
  EXPECT_GT(checked, 20u);
}

TEST(Ladder, SevenLevels) {
  const auto l = render_ladder(sample());
  ASSERT_EQ(l.size(), 7u);
  EXPECT_EQ(l[0].text, "tumor");
  EXPECT_EQ(l[1].text, "lung tumor");
  EXPECT_EQ(l[2].text, "tumor in the left lung");
  EXPECT_EQ(l[3].text, "tumor in the left upper lobe");
  EXPECT_EQ(l[4].text, "adenocarcinoma, stage IIIA, T2aN1M0");
  EXPECT_EQ(l[5].text, render_full(sample()).text);
  EXPECT_EQ(l[6].text.rfind(l[5].text + " ", 0), 0u);
  EXPECT_GT(l[6].text.size(), l[5].text.size() + 1);
  for (std::size_t i = 0; i < l.size(); ++i) EXPECT_EQ(l[i].level, kLadderLevels[i]);
}

TEST(SwapPlan, GridPlusGenericColumn) {
  std::vector<PromptAttributes> cases;
  for (int i = 0; i < 5; ++i) {
    auto a = sample();
    a.case_id = "c" + std::to_string(i);
    a.age = 50 + i;
    cases.push_back(a);
  }
  const auto plan = swap_plan(cases);
  ASSERT_EQ(plan.cells.size(), 30u);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      const auto& cell = plan.cells[i * 6 + j];
      EXPECT_EQ(cell.image_index, i);
      EXPECT_EQ(cell.prompt_index, j);
      EXPECT_EQ(cell.prompt.text, render_full(cases[j]).text);
    }
    EXPECT_FALSE(plan.cells[i * 6 + 5].prompt_index.has_value());
    EXPECT_EQ(plan.cells[i * 6 + 5].prompt.text, "lung tumor");
  }
  EXPECT_EQ(swap_plan(std::span(cases).first(2)).cells.size(), 6u);
  EXPECT_THROW(swap_plan(std::span(cases).first(1)), InsufficientCasesError);
}

TEST(Normalize, WhitespaceOnly) {
  EXPECT_EQ(normalize_prompt("  lung   tumor "), "lung tumor");
  EXPECT_EQ(normalize_prompt("Lung Tumor"), "Lung Tumor");
  EXPECT_EQ(normalize_prompt("a\t\nb"), "a b");
  for (const char* s : {"", "   ", " x  y ", "a\tb  c"}) EXPECT_EQ(normalize_prompt(normalize_prompt(s)), normalize_prompt(s));
}

TEST(Laterality, FromLocation) {
  EXPECT_EQ(laterality_of("left lower lobe"), Laterality::left);
  EXPECT_EQ(laterality_of("right middle lobe"), Laterality::right);
  EXPECT_FALSE(laterality_of("mediastinum").has_value());
}

TEST(Enums, Cardinalities) {
  EXPECT_EQ(kFragmentCategories.size(), 8u);
  EXPECT_EQ(kPerturbationCategories.size(), 9u);
  EXPECT_EQ(kLadderLevels.size(), 7u);
  for (auto c : kPerturbationCategories) EXPECT_EQ(parse_perturbation_category(to_string(c)), c);
  for (auto c : kFragmentCategories) EXPECT_EQ(parse_fragment_category(to_string(c)), c);
}
