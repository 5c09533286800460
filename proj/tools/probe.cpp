// probe: command-line driver for phantom generation, alignment experiments,
// benchmarking, adapter conformance and report rendering.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "probe/experiments.hpp"
#include "probe/io.hpp"

namespace fs = std::filesystem;
using namespace probe;
using namespace probe::experiments;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::string in;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> models;
  std::optional<std::size_t> cases;
  std::optional<double> threshold;
  std::optional<double> alpha;
  bool to_stdout = false;
  bool expect_truth = false;
};

ExperimentConfig load_effective_config(const Options& o, bool required) {
  ExperimentConfig cfg;
  if (!o.config.empty()) {
    cfg = load_config(o.config);
  } else if (required) {
    throw ConfigError("--config is required");
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.threshold) {
    if (*o.threshold < 0.0) throw ConfigError("--threshold must be nonnegative");
    cfg.catastrophic_threshold = *o.threshold;
  }
  if (o.alpha) {
    if (!(*o.alpha > 0.0 && *o.alpha < 1.0)) throw ConfigError("--alpha must lie in (0, 1)");
    cfg.stats.alpha = *o.alpha;
  }
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (const char* env = std::getenv("PROBE_CACHE_DIR"); env && *env) cfg.cache_dir = env;
  return cfg;
}

void require_output(const ExperimentConfig& cfg) {
  if (cfg.output_dir.empty()) throw ConfigError("no output directory (use --out or output_dir)");
}

// Models named on the command line that are not configured endpoints are
// accepted when they name a built-in mock.
std::vector<std::string> resolve_models(ExperimentConfig& cfg, const std::vector<std::string>& requested) {
  std::vector<std::string> ids;
  if (requested.empty()) {
    for (const auto& ep : cfg.endpoints) ids.push_back(ep.model_id);
    if (ids.empty()) throw ConfigError("no models configured (use --model)");
    return ids;
  }
  for (const auto& id : requested) {
    const bool known = std::any_of(cfg.endpoints.begin(), cfg.endpoints.end(),
                                   [&](const adapter::AdapterEndpoint& ep) { return ep.model_id == id; });
    if (!known) {
      try {
        cfg.endpoints.push_back(builtin_endpoint(id));
      } catch (const ConfigError&) {
        throw ConfigError("unknown model \"" + id + "\"");
      }
    }
    ids.push_back(id);
  }
  return ids;
}

std::vector<CaseRef> limited_cases(const ExperimentConfig& cfg, std::optional<std::size_t> n) {
  if (cfg.dataset_manifest.empty()) throw ConfigError("config: dataset_manifest is required");
  auto cases = load_manifest(cfg.dataset_manifest);
  if (n) {
    if (*n == 0) throw ConfigError("--cases must be positive");
    if (*n < cases.size()) cases.resize(*n);
  }
  return cases;
}

void emit(const Options& o, const RunReports& reports, const std::string& text) {
  if (!o.to_stdout) {
    std::cout << text << std::flush;
    return;
  }
  std::cerr << text;
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  if (reports.fragments) j["fragments"] = to_json(*reports.fragments);
  if (reports.perturbation) j["perturbation"] = to_json(*reports.perturbation);
  if (reports.ladder) j["ladder"] = to_json(*reports.ladder);
  if (reports.swap) j["swap"] = to_json(*reports.swap);
  if (reports.benchmark) j["benchmark"] = to_json(*reports.benchmark);
  if (!reports.conformance.empty()) {
    j["conformance"] = nlohmann::ordered_json::array();
    for (const auto& c : reports.conformance) j["conformance"].push_back(adapter::to_json(c));
  }
  std::cout << j.dump(2) << "\n" << std::flush;
}

int cmd_phantom_generate(const Options& o) {
  ExperimentConfig cfg = load_effective_config(o, false);
  require_output(cfg);
  phantom::PhantomSpec spec = cfg.phantom;
  if (o.cases) spec.n_cases = *o.cases;
  const auto cases = phantom::generate_phantom_set(spec, cfg.seed, cfg.output_dir);
  std::cerr << "wrote " << cases.size() << " cases to " << cfg.output_dir.string() << "\n";
  if (o.to_stdout) std::cout << io::read_file(cfg.output_dir / "manifest.json") << std::flush;
  return 0;
}

int cmd_alignment(const Options& o, const std::string& which) {
  ExperimentConfig cfg = load_effective_config(o, true);
  require_output(cfg);
  if (o.cases) cfg.alignment.cases = *o.cases;
  const auto models = resolve_models(cfg, o.models);
  Harness h(cfg);

  std::string text;
  for (const auto& model : models) {
    RunReports reports;
    const bool all = which == "all";
    // Sequential over one cache: the swap diagonal reuses full-prompt predictions.
    if (all || which == "fragments") {
      reports.fragments = run_fragment_experiment(h, model);
      text += print_fragments(*reports.fragments);
    }
    if (all || which == "perturb") {
      reports.perturbation = run_perturbation_experiment(h, model);
      text += print_perturbation(*reports.perturbation);
    }
    if (all || which == "ladder") {
      reports.ladder = run_ladder_experiment(h, model);
      text += print_ladder(*reports.ladder);
    }
    if (all || which == "swap") {
      reports.swap = run_swap_experiment(h, model);
      text += print_swap(*reports.swap);
    }
    const fs::path dir = models.size() == 1 ? cfg.output_dir : cfg.output_dir / model;
    write_reports(reports, h.config(), h.adapter_info(), dir);
    emit(o, reports, text);
    text.clear();
  }
  return 0;
}

int cmd_benchmark(const Options& o) {
  ExperimentConfig cfg = load_effective_config(o, true);
  require_output(cfg);
  const auto models = resolve_models(cfg, o.models);
  auto cases = limited_cases(cfg, o.cases);
  Harness h(cfg, std::move(cases));
  RunReports reports;
  reports.benchmark = run_benchmark(h, models);
  write_reports(reports, h.config(), h.adapter_info(), cfg.output_dir);
  emit(o, reports, print_table(*reports.benchmark) + print_pairwise(*reports.benchmark));
  return 0;
}

int cmd_conformance(const Options& o) {
  ExperimentConfig cfg = load_effective_config(o, true);
  const auto models = resolve_models(cfg, o.models);
  const auto cases = limited_cases(cfg, o.cases.value_or(3));
  Harness h(cfg, cases);

  std::vector<adapter::ConformanceFixture> fixtures;
  for (const auto& c : cases) {
    adapter::ConformanceFixture f;
    f.case_ref = c;
    f.prompt = render_full(c.attributes, cfg.templates).text;
    if (o.expect_truth) f.expected_mask = c.gtv;
    fixtures.push_back(std::move(f));
  }

  RunReports reports;
  std::string text;
  bool ok = true;
  for (const auto& model : models) {
    auto report = adapter::conformance_check(h.client(model), fixtures);
    text += model + ": " + std::to_string(report.passed()) + "/" + std::to_string(report.fixtures.size()) + " passed";
    if (!report.handshake_ok) text += " (handshake failed: " + report.handshake_error + ")";
    text += "\n";
    for (const auto& f : report.fixtures) {
      if (!f.pass) text += "  " + f.case_id + ": " + f.message + "\n";
    }
    ok = ok && report.all_passed();
    reports.conformance_models.push_back(model);
    reports.conformance.push_back(std::move(report));
  }
  std::map<std::string, adapter::AdapterInfo> adapters;
  for (const auto& r : reports.conformance) {
    if (r.handshake_ok) adapters[r.model_id] = r.info;
  }
  if (!cfg.output_dir.empty()) write_reports(reports, cfg, adapters, cfg.output_dir);
  emit(o, reports, text);
  return ok ? 0 : 1;
}

int cmd_report(const Options& o) {
  if (o.in.empty()) throw ConfigError("--in is required");
  const fs::path in = o.in;
  if (!fs::is_directory(in)) throw ConfigError("not a directory: " + in.string());
  const auto load = [&](const char* name) -> std::optional<nlohmann::json> {
    const fs::path p = in / name;
    if (!fs::exists(p)) return std::nullopt;
    try {
      return nlohmann::json::parse(io::read_file(p));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(p.string() + ": " + e.what());
    }
  };

  RunReports reports;
  std::string text;
  if (auto j = load("fragments.json")) {
    reports.fragments = fragment_report_from_json(*j);
    text += print_fragments(*reports.fragments);
  }
  if (auto j = load("perturbation.json")) {
    reports.perturbation = perturbation_report_from_json(*j);
    text += print_perturbation(*reports.perturbation);
  }
  if (auto j = load("ladder.json")) {
    reports.ladder = ladder_report_from_json(*j);
    text += print_ladder(*reports.ladder);
  }
  if (auto j = load("swap.json")) {
    reports.swap = swap_report_from_json(*j);
    text += print_swap(*reports.swap);
  }
  if (auto j = load("benchmark.json")) {
    reports.benchmark = benchmark_report_from_json(*j);
    text += print_table(*reports.benchmark) + print_pairwise(*reports.benchmark);
  }
  if (!reports.fragments && !reports.perturbation && !reports.ladder && !reports.swap && !reports.benchmark) {
    throw ConfigError("no report JSON files in " + in.string());
  }

  if (!o.out.empty()) {
    // Re-emit plot data; the configuration and adapter list come from the original run.
    ExperimentConfig cfg = load_effective_config(o, true);
    std::map<std::string, adapter::AdapterInfo> adapters;
    if (auto meta = load("run_metadata.json")) {
      for (const auto& [id, a] : meta->at("adapters").items()) {
        adapters[id] = {a.at("name").get<std::string>(), a.at("version").get<std::string>(),
                        a.at("protocol_version").get<int>()};
      }
    }
    write_reports(reports, cfg, adapters, o.out);
  }
  emit(o, reports, text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prompt-sensitivity probing harness for promptable 3D segmentation models", "probe"};
  app.require_subcommand(1);
  Options o;

  const auto common = [&](CLI::App* cmd) {
    cmd->add_option("--config", o.config, "Experiment configuration JSON");
    cmd->add_option("--out", o.out, "Output directory (overrides output_dir)");
    cmd->add_option("--seed", o.seed, "Seed (overrides config seed)");
    cmd->add_flag("--stdout", o.to_stdout, "Write machine-readable output to standard output");
  };

  auto* gen = app.add_subcommand("phantom-generate", "Generate a synthetic phantom dataset");
  common(gen);
  gen->add_option("--n,--cases", o.cases, "Number of cases (overrides phantom.n_cases)");

  auto* bench = app.add_subcommand("benchmark", "Benchmark several models on every case");
  common(bench);
  bench->add_option("--model", o.models, "Model id (repeatable; default all endpoints)");
  bench->add_option("--cases,--n", o.cases, "Use only the first N cases");
  bench->add_option("--alpha", o.alpha, "Significance level (overrides stats.alpha)");

  auto* align = app.add_subcommand("alignment", "Run alignment experiments");
  std::string which;
  align->add_option("experiment", which, "fragments | perturb | ladder | swap | all")
      ->required()
      ->check(CLI::IsMember({"fragments", "perturb", "ladder", "swap", "all"}));
  common(align);
  align->add_option("--model", o.models, "Model id (repeatable; default all endpoints)");
  align->add_option("--cases,--n", o.cases, "Alignment subset size (overrides alignment.cases)");
  align->add_option("--threshold", o.threshold, "Catastrophic |ΔDSC| threshold (overrides thresholds.catastrophic)");

  auto* conf = app.add_subcommand("conformance", "Check adapters against the protocol");
  common(conf);
  conf->add_option("--model", o.models, "Model id (repeatable; default all endpoints)");
  conf->add_option("--cases,--n", o.cases, "Number of fixture cases (default 3)");
  conf->add_flag("--expect-truth", o.expect_truth, "Require DSC 1.0 against the ground truth");

  auto* report = app.add_subcommand("report", "Render reports from a run directory");
  report->add_option("--in", o.in, "Run output directory")->required();
  report->add_option("--config", o.config, "Configuration of the original run (needed with --out)");
  report->add_option("--out", o.out, "Re-emit JSON/CSV/SVG into this directory");
  report->add_flag("--stdout", o.to_stdout, "Write machine-readable output to standard output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "probe: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_phantom_generate(o);
    if (bench->parsed()) return cmd_benchmark(o);
    if (align->parsed()) return cmd_alignment(o, which);
    if (conf->parsed()) return cmd_conformance(o);
    if (report->parsed()) return cmd_report(o);
  } catch (const ConfigError& e) {
    std::cerr << "probe: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "probe: " << e.what() << "\n";
    return 1;
  }
  std::cerr << app.help();
  return 2;
}
