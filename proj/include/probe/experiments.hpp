#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "probe/adapter.hpp"
#include "probe/dataset.hpp"
#include "probe/phantom.hpp"
#include "probe/promptgen.hpp"
#include "probe/stats.hpp"

namespace probe::experiments {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct AlignmentConfig {
  /// Cases (manifest order) used by the four alignment experiments.
  std::size_t cases = 7;
  /// Cases in the cross-case swap grid, drawn from the alignment subset.
  std::size_t swap_cases = 5;
  /// Optional per-case, per-category cap on perturbation substitutes.
  std::optional<std::size_t> perturbation_cap;
};

struct ExperimentConfig {
  std::filesystem::path dataset_manifest;
  std::vector<adapter::AdapterEndpoint> endpoints;
  double catastrophic_threshold = 0.5;
  stats::StatsConfig stats;
  /// Pairs left out of the benchmark's pairwise family.
  std::vector<std::pair<std::string, std::string>> excluded_pairs;
  /// When set, pairwise rows involving this model list it as model_a.
  std::string reference_model;
  SubstitutionPool pools = default_substitution_pool();
  PromptTemplates templates;
  AlignmentConfig alignment;
  phantom::PhantomSpec phantom;
  std::filesystem::path output_dir;
  /// Empty means <output_dir>/cache.
  std::filesystem::path cache_dir;
  std::uint64_t seed = 0;
};

/// Parses the experiment configuration; relative paths resolve against `base_dir`.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical JSON form of the effective configuration.
nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg);
/// SHA-256 of the canonical configuration, excluding output and cache locations.
std::string config_hash(const ExperimentConfig& cfg);

/// Endpoint for a built-in mock with default parameters; `name` is a mock
/// name accepted by phantom::parse_mock_type.
adapter::AdapterEndpoint builtin_endpoint(std::string_view name);

// ---------------------------------------------------------------------------
// Session
// ---------------------------------------------------------------------------

struct Scored {
  adapter::PredictionRecord record;
  double dsc = 0.0;
  bool failed = false;
};

/// Shared state for one run: configuration, dataset, model clients over one
/// cache, and ground-truth masks.
class Harness {
 public:
  explicit Harness(ExperimentConfig cfg);
  Harness(ExperimentConfig cfg, std::vector<CaseRef> cases);

  const ExperimentConfig& config() const { return cfg_; }
  const std::vector<CaseRef>& cases() const { return cases_; }
  std::span<const CaseRef> alignment_cases() const;
  std::filesystem::path cache_dir() const;

  const adapter::AdapterEndpoint& endpoint(const std::string& model_id) const;
  adapter::ModelClient& client(const std::string& model_id);
  /// Replaces the transport behind `model_id` (tests inject instrumented doubles).
  void set_transport(const std::string& model_id, std::unique_ptr<adapter::Transport> transport);

  const MaskVolume& gtv(const CaseRef& c);

  /// Predicts and scores each (case, prompt). Failures score DSC 0 and are
  /// flagged. Requests run concurrently up to the endpoint's max_inflight.
  std::vector<Scored> score_all(const std::string& model_id,
                                const std::vector<std::pair<const CaseRef*, std::string>>& requests);

  /// Handshake results for every client created so far, by model id.
  std::map<std::string, adapter::AdapterInfo> adapter_info();

 private:
  ExperimentConfig cfg_;
  std::vector<CaseRef> cases_;
  std::mutex mutex_;
  std::map<std::string, std::unique_ptr<adapter::ModelClient>> clients_;
  std::map<std::string, std::unique_ptr<MaskVolume>> gtv_;
};

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

enum class Severity { benign, catastrophic };
std::string_view to_string(Severity s);

/// Catastrophic iff |delta| > threshold (strict).
Severity classify_delta(double delta, double threshold);

struct Evaluation {
  std::string case_id;
  std::string label;
  std::string prompt;
  double dsc = 0.0;
  bool zero_mask = false;
  bool failed = false;
};

struct ConditionRow {
  std::string label;
  stats::SummaryStats dsc;
  double zero_mask_rate = 0.0;
  std::size_t failures = 0;
};

struct FragmentReport {
  std::string model_id;
  std::vector<std::string> case_ids;
  /// The full prompt first, then one row per FragmentCategory in fixed order.
  std::vector<ConditionRow> rows;
  /// Fraction of cases whose irrelevant-prompt prediction is an empty mask.
  double suppression_rate = 0.0;
  std::vector<Evaluation> evaluations;
};

struct PerturbationOutcome {
  std::string case_id;
  PerturbationCategory category = PerturbationCategory::tumor_type;
  std::string substitution;
  std::string prompt;
  double matched_dsc = 0.0;
  double perturbed_dsc = 0.0;
  double delta_dsc = 0.0;
  Severity severity = Severity::benign;
  bool zero_mask = false;
  bool failed = false;
};

struct PerturbationSummary {
  PerturbationCategory category = PerturbationCategory::tumor_type;
  std::size_t n = 0;
  double median_abs_delta = 0.0;
  double mean_delta = 0.0;
  std::size_t catastrophic = 0;
  double catastrophic_rate = 0.0;
  double zero_mask_rate = 0.0;
};

struct PerturbationReport {
  std::string model_id;
  double threshold = 0.5;
  std::vector<std::string> case_ids;
  std::vector<PerturbationSummary> categories;
  std::vector<PerturbationOutcome> outcomes;
  std::vector<std::string> warnings;
};

struct LadderReport {
  std::string model_id;
  std::vector<std::string> case_ids;
  /// L0..L6.
  std::vector<ConditionRow> rows;
  std::vector<Evaluation> evaluations;
};

struct SwapReport {
  std::string model_id;
  std::vector<std::string> case_ids;
  /// matrix[i][j]: DSC of image i under the full prompt of case j.
  std::vector<std::vector<double>> matrix;
  std::vector<std::vector<bool>> zero;
  std::vector<double> generic;
  std::vector<bool> generic_zero;
  stats::SummaryStats diagonal;
  stats::SummaryStats offdiagonal;
  double offdiag_zero_fraction = 0.0;
};

struct ModelRow {
  std::string model_id;
  std::string category;
  stats::SummaryStats dsc;
  std::size_t failures = 0;
  /// Endpoints considered when this row is the best of several variants.
  std::vector<std::string> variants;
};

struct PairwiseComparison {
  std::string model_a;
  std::string model_b;
  double mean_diff = 0.0;
  double median_diff = 0.0;
  stats::WilcoxonResult wilcoxon;
  double p_raw = 1.0;
  double p_adj = 1.0;
  double r = 0.0;
  bool significant = false;
};

struct BenchmarkReport {
  std::vector<std::string> case_ids;
  std::vector<ModelRow> models;
  /// dsc[m][c] for model row m and case c.
  std::vector<std::vector<double>> dsc;
  std::vector<std::vector<bool>> failed;
  stats::FriedmanResult friedman;
  std::vector<PairwiseComparison> pairwise;
  double alpha = 0.05;
};

FragmentReport run_fragment_experiment(Harness& h, const std::string& model_id);
PerturbationReport run_perturbation_experiment(Harness& h, const std::string& model_id);
LadderReport run_ladder_experiment(Harness& h, const std::string& model_id);
SwapReport run_swap_experiment(Harness& h, const std::string& model_id);
/// Every model on every case with its designated prompt (full prompt for
/// prompted endpoints, empty for vision-only). Needs >= 2 models.
BenchmarkReport run_benchmark(Harness& h, const std::vector<std::string>& model_ids);

/// Swap-grid cases: alignment cases with distinct locations first, then the rest.
std::vector<CaseRef> select_swap_cases(std::span<const CaseRef> cases, std::size_t n);

nlohmann::ordered_json to_json(const FragmentReport& r);
nlohmann::ordered_json to_json(const PerturbationReport& r);
nlohmann::ordered_json to_json(const LadderReport& r);
nlohmann::ordered_json to_json(const SwapReport& r);
nlohmann::ordered_json to_json(const BenchmarkReport& r);

FragmentReport fragment_report_from_json(const nlohmann::json& j);
PerturbationReport perturbation_report_from_json(const nlohmann::json& j);
LadderReport ladder_report_from_json(const nlohmann::json& j);
SwapReport swap_report_from_json(const nlohmann::json& j);
BenchmarkReport benchmark_report_from_json(const nlohmann::json& j);

struct RunReports {
  std::optional<FragmentReport> fragments;
  std::optional<PerturbationReport> perturbation;
  std::optional<LadderReport> ladder;
  std::optional<SwapReport> swap;
  std::optional<BenchmarkReport> benchmark;
  std::vector<std::string> conformance_models;
  std::vector<adapter::ConformanceReport> conformance;
};

/// Run metadata: configuration hash, seed, statistical conventions, adapters.
nlohmann::ordered_json run_metadata(const ExperimentConfig& cfg,
                                    const std::map<std::string, adapter::AdapterInfo>& adapters,
                                    const std::vector<std::string>& files);

/// Writes JSON + CSV (+ SVG for ladder and swap) for each present report,
/// then run_metadata.json. Output is byte-deterministic for identical inputs.
/// Returns the written paths relative to `output_dir`, sorted.
std::vector<std::string> write_reports(const RunReports& reports, const ExperimentConfig& cfg,
                                       const std::map<std::string, adapter::AdapterInfo>& adapters,
                                       const std::filesystem::path& output_dir);

// ---------------------------------------------------------------------------
// Text rendering
// ---------------------------------------------------------------------------

/// "0.861±0.081"
std::string format_mean_sd(const stats::SummaryStats& s);
/// "0.613±0.348, median 0.777"
std::string format_summary(const stats::SummaryStats& s);
/// Fixed three decimals, never "-0.000".
std::string format_dsc(double v);
/// "63.4% catastrophic, mean ΔDSC −0.560"
std::string format_perturbation_row(const PerturbationSummary& s);
/// "matched 0.906±0.046, mismatched 0.406±0.441, 44% zero"
std::string format_swap_summary(const SwapReport& r);

/// Fixed-width Model | Category | Mean DSC | Median table, best mean first.
std::string print_table(const BenchmarkReport& r);
std::string print_fragments(const FragmentReport& r);
std::string print_perturbation(const PerturbationReport& r);
std::string print_ladder(const LadderReport& r);
std::string print_swap(const SwapReport& r);
std::string print_pairwise(const BenchmarkReport& r);

}  // namespace probe::experiments
