#include <algorithm>
#include <cmath>
#include <set>

#include "probe/experiments.hpp"
#include "probe/parallel.hpp"

namespace probe::experiments {

namespace fs = std::filesystem;

namespace {

using Requests = std::vector<std::pair<const CaseRef*, std::string>>;

ConditionRow summarize_condition(std::string label, const std::vector<Scored>& scored) {
  ConditionRow row;
  row.label = std::move(label);
  std::vector<double> dsc;
  std::size_t zero = 0;
  for (const auto& s : scored) {
    dsc.push_back(s.dsc);
    zero += s.record.zero_mask ? 1 : 0;
    row.failures += s.failed ? 1 : 0;
  }
  if (!dsc.empty()) {
    row.dsc = stats::summarize(dsc);
    row.zero_mask_rate = static_cast<double>(zero) / static_cast<double>(dsc.size());
  }
  return row;
}

Evaluation evaluation(const Scored& s, std::string label) {
  return {s.record.case_id, std::move(label), s.record.prompt_text, s.dsc, s.record.zero_mask, s.failed};
}

std::vector<std::string> ids_of(std::span<const CaseRef> cases) {
  std::vector<std::string> ids;
  for (const auto& c : cases) ids.push_back(c.case_id);
  return ids;
}

std::string model_key(const adapter::AdapterEndpoint& ep) { return ep.variant_of.empty() ? ep.model_id : ep.variant_of; }

}  // namespace

// ---------------------------------------------------------------------------
// Harness
// ---------------------------------------------------------------------------

Harness::Harness(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.dataset_manifest.empty()) throw ConfigError("config: dataset_manifest is required");
  cases_ = load_manifest(cfg_.dataset_manifest);
}

Harness::Harness(ExperimentConfig cfg, std::vector<CaseRef> cases) : cfg_(std::move(cfg)), cases_(std::move(cases)) {}

std::span<const CaseRef> Harness::alignment_cases() const {
  const std::size_t n = cfg_.alignment.cases == 0 ? cases_.size() : std::min(cfg_.alignment.cases, cases_.size());
  return std::span<const CaseRef>(cases_).first(n);
}

fs::path Harness::cache_dir() const {
  if (!cfg_.cache_dir.empty()) return cfg_.cache_dir;
  return cfg_.output_dir / "cache";
}

const adapter::AdapterEndpoint& Harness::endpoint(const std::string& model_id) const {
  for (const auto& ep : cfg_.endpoints) {
    if (ep.model_id == model_id) return ep;
  }
  throw ConfigError("no endpoint named \"" + model_id + "\"");
}

adapter::ModelClient& Harness::client(const std::string& model_id) {
  std::lock_guard lock(mutex_);
  auto& slot = clients_[model_id];
  if (!slot) {
    adapter::AdapterEndpoint ep = endpoint(model_id);
    if (auto* b = std::get_if<adapter::BuiltinTransport>(&ep.transport)) b->seed = cfg_.seed;
    slot = std::make_unique<adapter::ModelClient>(ep, cache_dir());
  }
  return *slot;
}

void Harness::set_transport(const std::string& model_id, std::unique_ptr<adapter::Transport> transport) {
  std::lock_guard lock(mutex_);
  clients_[model_id] = std::make_unique<adapter::ModelClient>(endpoint(model_id), cache_dir(), std::move(transport));
}

const MaskVolume& Harness::gtv(const CaseRef& c) {
  {
    std::lock_guard lock(mutex_);
    if (auto it = gtv_.find(c.case_id); it != gtv_.end()) return *it->second;
  }
  auto mask = std::make_unique<MaskVolume>(read_mask(c.gtv));
  std::lock_guard lock(mutex_);
  return *gtv_.emplace(c.case_id, std::move(mask)).first->second;
}

std::vector<Scored> Harness::score_all(const std::string& model_id, const Requests& requests) {
  adapter::ModelClient& cl = client(model_id);
  cl.handshake();

  // Identical (case, prompt) requests are evaluated once.
  std::map<std::pair<std::string, std::string>, std::size_t> first_of;
  std::vector<std::size_t> unique;
  std::vector<std::size_t> source(requests.size());
  for (std::size_t i = 0; i < requests.size(); ++i) {
    auto key = std::make_pair(requests[i].first->case_id, normalize_prompt(requests[i].second));
    auto [it, inserted] = first_of.emplace(std::move(key), unique.size());
    if (inserted) unique.push_back(i);
    source[i] = it->second;
  }

  // Ground truth is loaded up front: a missing or corrupt GTV is a dataset
  // error, not an adapter failure.
  for (std::size_t i : unique) gtv(*requests[i].first);

  std::vector<Scored> scored(unique.size());
  parallel_for(unique.size(), cl.endpoint().max_inflight, [&](std::size_t u) {
    const auto& [c, prompt] = requests[unique[u]];
    Scored s;
    s.record = cl.segment_or_failure(*c, prompt);
    if (s.record.error) {
      s.failed = true;
    } else {
      try {
        s.dsc = dice(read_mask(s.record.mask_path), gtv(*c)).value;
      } catch (const std::exception& e) {
        s.failed = true;
        s.record.zero_mask = true;
        s.record.error = e.what();
      }
    }
    scored[u] = std::move(s);
  });

  std::vector<Scored> out;
  out.reserve(requests.size());
  for (std::size_t i = 0; i < requests.size(); ++i) out.push_back(scored[source[i]]);
  return out;
}

std::map<std::string, adapter::AdapterInfo> Harness::adapter_info() {
  std::vector<std::pair<std::string, adapter::ModelClient*>> live;
  {
    std::lock_guard lock(mutex_);
    for (auto& [id, c] : clients_) live.emplace_back(id, c.get());
  }
  std::map<std::string, adapter::AdapterInfo> out;
  for (auto& [id, c] : live) out[id] = c->handshake();
  return out;
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

std::string_view to_string(Severity s) { return s == Severity::benign ? "benign" : "catastrophic"; }

Severity classify_delta(double delta, double threshold) {
  return std::abs(delta) > threshold ? Severity::catastrophic : Severity::benign;
}

FragmentReport run_fragment_experiment(Harness& h, const std::string& model_id) {
  const auto cases = h.alignment_cases();
  const auto& templates = h.config().templates;

  // Per case: full prompt followed by the eight fragments.
  constexpr std::size_t kPerCase = 1 + kFragmentCategories.size();
  Requests requests;
  for (const auto& c : cases) {
    requests.emplace_back(&c, render_full(c.attributes, templates).text);
    for (auto& f : render_fragments(c.attributes, templates)) requests.emplace_back(&c, std::move(f.text));
  }
  const auto scored = h.score_all(model_id, requests);

  FragmentReport report;
  report.model_id = model_id;
  report.case_ids = ids_of(cases);
  for (std::size_t slot = 0; slot < kPerCase; ++slot) {
    const std::string label = slot == 0 ? "full" : std::string(to_string(kFragmentCategories[slot - 1]));
    std::vector<Scored> column;
    for (std::size_t i = 0; i < cases.size(); ++i) column.push_back(scored[i * kPerCase + slot]);
    report.rows.push_back(summarize_condition(label, column));
    if (slot == kPerCase - 1) report.suppression_rate = report.rows.back().zero_mask_rate;
  }
  for (std::size_t i = 0; i < scored.size(); ++i) {
    const std::size_t slot = i % kPerCase;
    report.evaluations.push_back(
        evaluation(scored[i], slot == 0 ? "full" : std::string(to_string(kFragmentCategories[slot - 1]))));
  }
  return report;
}

PerturbationReport run_perturbation_experiment(Harness& h, const std::string& model_id) {
  const auto& cfg = h.config();
  const auto cases = h.alignment_cases();

  PerturbationReport report;
  report.model_id = model_id;
  report.threshold = cfg.catastrophic_threshold;
  report.case_ids = ids_of(cases);

  // Matched baselines, computed once per case.
  Requests matched_requests;
  for (const auto& c : cases) matched_requests.emplace_back(&c, render_full(c.attributes, cfg.templates).text);
  const auto matched = h.score_all(model_id, matched_requests);

  struct Pending {
    std::size_t case_index;
    PromptVariant variant;
  };
  std::vector<Pending> pending;
  for (PerturbationCategory cat : kPerturbationCategories) {
    for (std::size_t i = 0; i < cases.size(); ++i) {
      const auto& c = cases[i];
      SplitMix64 rng(splitmix64_next(RngState{cfg.seed ^ fnv1a64(c.case_id + '\x1f' + std::string(to_string(cat)))}).second);
      try {
        for (auto& v : render_perturbations(c.attributes, cat, cfg.pools, rng, cfg.templates, cfg.alignment.perturbation_cap)) {
          pending.push_back({i, std::move(v)});
        }
      } catch (const PoolExhaustedError& e) {
        report.warnings.push_back(std::string(to_string(cat)) + " skipped for case " + c.case_id + ": " + e.what());
      }
    }
  }

  Requests requests;
  for (const auto& p : pending) requests.emplace_back(&cases[p.case_index], p.variant.text);
  const auto scored = h.score_all(model_id, requests);

  for (std::size_t k = 0; k < pending.size(); ++k) {
    const auto& p = pending[k];
    PerturbationOutcome o;
    o.case_id = cases[p.case_index].case_id;
    o.category = *p.variant.perturbation;
    o.substitution = p.variant.substitution;
    o.prompt = scored[k].record.prompt_text;
    o.matched_dsc = matched[p.case_index].dsc;
    o.perturbed_dsc = scored[k].dsc;
    o.delta_dsc = o.perturbed_dsc - o.matched_dsc;
    o.severity = classify_delta(o.delta_dsc, cfg.catastrophic_threshold);
    o.zero_mask = scored[k].record.zero_mask;
    o.failed = scored[k].failed || matched[p.case_index].failed;
    report.outcomes.push_back(std::move(o));
  }

  // Pooled across cases per category.
  for (PerturbationCategory cat : kPerturbationCategories) {
    PerturbationSummary s;
    s.category = cat;
    std::vector<double> abs_delta;
    double sum = 0.0;
    std::size_t zero = 0;
    for (const auto& o : report.outcomes) {
      if (o.category != cat) continue;
      abs_delta.push_back(std::abs(o.delta_dsc));
      sum += o.delta_dsc;
      s.catastrophic += o.severity == Severity::catastrophic ? 1 : 0;
      zero += o.zero_mask ? 1 : 0;
    }
    s.n = abs_delta.size();
    if (s.n > 0) {
      const double n = static_cast<double>(s.n);
      s.median_abs_delta = stats::summarize(abs_delta).median;
      s.mean_delta = sum / n;
      s.catastrophic_rate = static_cast<double>(s.catastrophic) / n;
      s.zero_mask_rate = static_cast<double>(zero) / n;
    } else {
      report.warnings.push_back(std::string(to_string(cat)) + ": no perturbations evaluated");
    }
    report.categories.push_back(s);
  }
  return report;
}

LadderReport run_ladder_experiment(Harness& h, const std::string& model_id) {
  const auto cases = h.alignment_cases();
  Requests requests;
  for (const auto& c : cases) {
    for (auto& v : render_ladder(c.attributes, h.config().templates)) requests.emplace_back(&c, std::move(v.text));
  }
  const auto scored = h.score_all(model_id, requests);

  LadderReport report;
  report.model_id = model_id;
  report.case_ids = ids_of(cases);
  const std::size_t levels = kLadderLevels.size();
  for (std::size_t l = 0; l < levels; ++l) {
    std::vector<Scored> column;
    for (std::size_t i = 0; i < cases.size(); ++i) column.push_back(scored[i * levels + l]);
    report.rows.push_back(summarize_condition(std::string(to_string(kLadderLevels[l])), column));
  }
  for (std::size_t i = 0; i < scored.size(); ++i) {
    report.evaluations.push_back(evaluation(scored[i], std::string(to_string(kLadderLevels[i % levels]))));
  }
  return report;
}

std::vector<CaseRef> select_swap_cases(std::span<const CaseRef> cases, std::size_t n) {
  std::vector<CaseRef> picked;
  std::vector<bool> used(cases.size(), false);
  std::set<std::string> locations;
  for (std::size_t i = 0; i < cases.size() && picked.size() < n; ++i) {
    if (locations.insert(cases[i].attributes.location).second) {
      picked.push_back(cases[i]);
      used[i] = true;
    }
  }
  for (std::size_t i = 0; i < cases.size() && picked.size() < n; ++i) {
    if (!used[i]) picked.push_back(cases[i]);
  }
  // Keep manifest order so the grid reads naturally.
  std::vector<CaseRef> ordered;
  for (const auto& c : cases) {
    if (std::any_of(picked.begin(), picked.end(), [&](const CaseRef& p) { return p.case_id == c.case_id; })) {
      ordered.push_back(c);
    }
  }
  return ordered;
}

SwapReport run_swap_experiment(Harness& h, const std::string& model_id) {
  const auto cases = select_swap_cases(h.alignment_cases(), h.config().alignment.swap_cases);
  std::vector<PromptAttributes> attrs;
  for (const auto& c : cases) attrs.push_back(c.attributes);
  const SwapPlan plan = swap_plan(attrs, h.config().templates);

  Requests requests;
  for (const auto& cell : plan.cells) requests.emplace_back(&cases[cell.image_index], cell.prompt.text);
  const auto scored = h.score_all(model_id, requests);

  const std::size_t n = cases.size();
  SwapReport report;
  report.model_id = model_id;
  report.case_ids = plan.case_ids;
  report.matrix.assign(n, std::vector<double>(n, 0.0));
  report.zero.assign(n, std::vector<bool>(n, false));
  report.generic.assign(n, 0.0);
  report.generic_zero.assign(n, false);
  std::vector<double> diag, off;
  std::size_t off_zero = 0;
  for (std::size_t k = 0; k < plan.cells.size(); ++k) {
    const auto& cell = plan.cells[k];
    const std::size_t i = cell.image_index;
    if (!cell.prompt_index) {
      report.generic[i] = scored[k].dsc;
      report.generic_zero[i] = scored[k].record.zero_mask;
      continue;
    }
    const std::size_t j = *cell.prompt_index;
    report.matrix[i][j] = scored[k].dsc;
    report.zero[i][j] = scored[k].record.zero_mask;
    if (i == j) {
      diag.push_back(scored[k].dsc);
    } else {
      off.push_back(scored[k].dsc);
      off_zero += scored[k].record.zero_mask ? 1 : 0;
    }
  }
  report.diagonal = stats::summarize(diag);
  report.offdiagonal = stats::summarize(off);
  report.offdiag_zero_fraction = static_cast<double>(off_zero) / static_cast<double>(n * (n - 1));
  return report;
}

BenchmarkReport run_benchmark(Harness& h, const std::vector<std::string>& model_ids) {
  if (model_ids.size() < 2) throw ConfigError("benchmark needs at least 2 models");
  const auto& cfg = h.config();
  const auto& cases = h.cases();

  struct EndpointResult {
    std::string model_id;
    std::vector<double> dsc;
    std::vector<bool> failed;
    double mean = 0.0;
  };
  std::vector<EndpointResult> results;
  for (const auto& id : model_ids) {
    const auto& ep = h.endpoint(id);
    Requests requests;
    for (const auto& c : cases) {
      requests.emplace_back(&c, ep.prompted ? render_full(c.attributes, cfg.templates).text : std::string());
    }
    const auto scored = h.score_all(id, requests);
    EndpointResult r;
    r.model_id = id;
    for (const auto& s : scored) {
      r.dsc.push_back(s.dsc);
      r.failed.push_back(s.failed);
    }
    r.mean = r.dsc.empty() ? 0.0 : stats::summarize(r.dsc).mean;
    results.push_back(std::move(r));
  }

  // Best-mean variant per model; rows keep first-appearance order.
  std::vector<std::string> keys;
  std::map<std::string, std::size_t> best;
  std::map<std::string, std::vector<std::string>> variants;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const std::string key = model_key(h.endpoint(results[i].model_id));
    variants[key].push_back(results[i].model_id);
    auto [it, inserted] = best.emplace(key, i);
    if (inserted) {
      keys.push_back(key);
    } else if (results[i].mean > results[it->second].mean) {
      it->second = i;
    }
  }
  if (keys.size() < 2) throw ConfigError("benchmark needs at least 2 distinct models");

  BenchmarkReport report;
  report.alpha = cfg.stats.alpha;
  report.case_ids = ids_of(cases);
  for (const auto& key : keys) {
    const auto& r = results[best[key]];
    const auto& ep = h.endpoint(r.model_id);
    ModelRow row;
    row.model_id = r.model_id;
    row.category = ep.category;
    row.dsc = stats::summarize(r.dsc);
    row.failures = static_cast<std::size_t>(std::count(r.failed.begin(), r.failed.end(), true));
    if (variants[key].size() > 1) row.variants = variants[key];
    report.models.push_back(std::move(row));
    report.dsc.push_back(r.dsc);
    report.failed.push_back(r.failed);
  }

  std::vector<std::vector<double>> blocks(cases.size(), std::vector<double>(report.models.size()));
  for (std::size_t m = 0; m < report.models.size(); ++m) {
    for (std::size_t c = 0; c < cases.size(); ++c) blocks[c][m] = report.dsc[m][c];
  }
  report.friedman = stats::friedman(blocks);

  const auto excluded = [&](const std::string& a, const std::string& b) {
    return std::any_of(cfg.excluded_pairs.begin(), cfg.excluded_pairs.end(), [&](const auto& p) {
      return (p.first == a && p.second == b) || (p.first == b && p.second == a);
    });
  };
  for (std::size_t a = 0; a < report.models.size(); ++a) {
    for (std::size_t b = a + 1; b < report.models.size(); ++b) {
      std::size_t ia = a, ib = b;
      if (excluded(report.models[ia].model_id, report.models[ib].model_id)) continue;
      if (!cfg.reference_model.empty() && report.models[ib].model_id == cfg.reference_model) std::swap(ia, ib);
      PairwiseComparison pc;
      pc.model_a = report.models[ia].model_id;
      pc.model_b = report.models[ib].model_id;
      std::vector<double> diff(cases.size());
      for (std::size_t c = 0; c < cases.size(); ++c) diff[c] = report.dsc[ia][c] - report.dsc[ib][c];
      const auto ds = stats::summarize(diff);
      pc.mean_diff = ds.mean;
      pc.median_diff = ds.median;
      pc.wilcoxon = stats::wilcoxon_signed_rank(report.dsc[ia], report.dsc[ib], cfg.stats);
      pc.p_raw = pc.wilcoxon.p_two_sided;
      pc.r = stats::effect_size_r(pc.wilcoxon.z, cases.size());
      report.pairwise.push_back(std::move(pc));
    }
  }
  std::vector<double> raw;
  for (const auto& pc : report.pairwise) raw.push_back(pc.p_raw);
  const auto adjusted = stats::bh_adjust(raw);
  for (std::size_t i = 0; i < report.pairwise.size(); ++i) {
    report.pairwise[i].p_adj = adjusted[i];
    report.pairwise[i].significant = adjusted[i] < cfg.stats.alpha;
  }
  return report;
}

}  // namespace probe::experiments
