#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "probe/experiments.hpp"
#include "probe/io.hpp"

namespace probe::experiments {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// printf-style fixed decimals with negative zero folded to zero.
std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

std::string percent(double fraction, int decimals) { return fixed(100.0 * fraction, decimals) + "%"; }

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string csv_bool(bool b) { return b ? "1" : "0"; }

ordered_json summary_json(const stats::SummaryStats& s) {
  return {{"n", s.n}, {"mean", s.mean}, {"sd", s.sd}, {"median", s.median}};
}

stats::SummaryStats summary_from(const json& j) {
  return {j.at("mean").get<double>(), j.at("sd").get<double>(), j.at("median").get<double>(),
          j.at("n").get<std::size_t>()};
}

ordered_json row_json(const ConditionRow& r) {
  return {{"label", r.label}, {"dsc", summary_json(r.dsc)}, {"zero_mask_rate", r.zero_mask_rate}, {"failures", r.failures}};
}

ConditionRow row_from(const json& j) {
  return {j.at("label").get<std::string>(), summary_from(j.at("dsc")), j.at("zero_mask_rate").get<double>(),
          j.at("failures").get<std::size_t>()};
}

ordered_json evaluation_json(const Evaluation& e) {
  return {{"case_id", e.case_id}, {"label", e.label},         {"prompt", e.prompt},
          {"dsc", e.dsc},         {"zero_mask", e.zero_mask}, {"failed", e.failed}};
}

Evaluation evaluation_from(const json& j) {
  return {j.at("case_id").get<std::string>(), j.at("label").get<std::string>(), j.at("prompt").get<std::string>(),
          j.at("dsc").get<double>(),          j.at("zero_mask").get<bool>(),    j.at("failed").get<bool>()};
}

ordered_json wilcoxon_json(const stats::WilcoxonResult& w) {
  return {{"n_used", w.n_used},
          {"w_plus", w.w_plus},
          {"w_minus", w.w_minus},
          {"z", w.z},
          {"p_two_sided", w.p_two_sided},
          {"method", stats::to_string(w.method)},
          {"all_zero", w.all_zero},
          {"ties", w.ties}};
}

stats::WilcoxonResult wilcoxon_from(const json& j) {
  stats::WilcoxonResult w;
  w.n_used = j.at("n_used").get<std::size_t>();
  w.w_plus = j.at("w_plus").get<double>();
  w.w_minus = j.at("w_minus").get<double>();
  w.z = j.at("z").get<double>();
  w.p_two_sided = j.at("p_two_sided").get<double>();
  const auto method = j.at("method").get<std::string>();
  if (method == "exact") {
    w.method = stats::WilcoxonMethod::exact;
  } else if (method == "normal_approx") {
    w.method = stats::WilcoxonMethod::normal_approx;
  } else {
    throw ConfigError("unknown wilcoxon method \"" + method + "\"");
  }
  w.all_zero = j.at("all_zero").get<bool>();
  w.ties = j.at("ties").get<bool>();
  return w;
}

Severity severity_from(const std::string& s) {
  if (s == "benign") return Severity::benign;
  if (s == "catastrophic") return Severity::catastrophic;
  throw ConfigError("unknown severity \"" + s + "\"");
}

std::string pad(std::string s, std::size_t width) {
  // Width counts code points so "±" occupies one column.
  std::size_t cols = 0;
  for (unsigned char c : s) cols += (c & 0xC0) != 0x80 ? 1 : 0;
  if (cols < width) s.append(width - cols, ' ');
  return s;
}

std::string condition_csv(const std::vector<ConditionRow>& rows, std::string_view first_column) {
  std::string out = std::string(first_column) + ",n,mean,sd,median,zero_mask_rate,failures\n";
  for (const auto& r : rows) {
    out += csv_field(r.label) + "," + std::to_string(r.dsc.n) + "," + fixed(r.dsc.mean, 6) + "," + fixed(r.dsc.sd, 6) +
           "," + fixed(r.dsc.median, 6) + "," + fixed(r.zero_mask_rate, 6) + "," + std::to_string(r.failures) + "\n";
  }
  return out;
}

std::string evaluations_csv(const std::vector<Evaluation>& evals, std::string_view label_column) {
  std::string out = "case_id," + std::string(label_column) + ",dsc,zero_mask,failed,prompt\n";
  for (const auto& e : evals) {
    out += csv_field(e.case_id) + "," + csv_field(e.label) + "," + fixed(e.dsc, 6) + "," + csv_bool(e.zero_mask) + "," +
           csv_bool(e.failed) + "," + csv_field(e.prompt) + "\n";
  }
  return out;
}

std::string escape_xml(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string ladder_svg(const LadderReport& r) {
  constexpr double kW = 480, kH = 300, kLeft = 50, kRight = 20, kTop = 30, kBottom = 40;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  const std::size_t n = r.rows.size();
  const auto x_at = [&](std::size_t i) { return kLeft + (n > 1 ? pw * static_cast<double>(i) / static_cast<double>(n - 1) : pw / 2); };
  const auto y_at = [&](double v) { return kTop + ph * (1.0 - std::clamp(v, 0.0, 1.0)); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<text x=\"" << kLeft << "\" y=\"18\">" << escape_xml(r.model_id) << " mean DSC by prompt level</text>\n";
  o << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"#999\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = t / 4.0;
    o << "<text x=\"" << kLeft - 6 << "\" y=\"" << fixed(y_at(v) + 4, 2) << "\" text-anchor=\"end\">" << fixed(v, 2)
      << "</text>\n";
  }
  std::string points;
  for (std::size_t i = 0; i < n; ++i) {
    points += (i ? " " : "") + fixed(x_at(i), 2) + "," + fixed(y_at(r.rows[i].dsc.mean), 2);
    o << "<text x=\"" << fixed(x_at(i), 2) << "\" y=\"" << kH - 18 << "\" text-anchor=\"middle\">"
      << escape_xml(r.rows[i].label) << "</text>\n";
  }
  o << "<polyline points=\"" << points << "\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n";
  for (std::size_t i = 0; i < n; ++i) {
    o << "<circle cx=\"" << fixed(x_at(i), 2) << "\" cy=\"" << fixed(y_at(r.rows[i].dsc.mean), 2)
      << "\" r=\"3\" fill=\"#1f77b4\"/>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string swap_svg(const SwapReport& r) {
  constexpr int kCell = 48, kLeft = 110, kTop = 40;
  const std::size_t n = r.case_ids.size();
  const int w = kLeft + kCell * static_cast<int>(n + 1) + 10;
  const int h = kTop + kCell * static_cast<int>(n) + 10;
  const auto fill = [](double v) {
    const int g = static_cast<int>(std::lround(255.0 * (1.0 - std::clamp(v, 0.0, 1.0))));
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x%02xff", g, g);
    return std::string(buf);
  };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
    << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  o << "<text x=\"4\" y=\"14\">" << escape_xml(r.model_id) << " DSC, rows image, columns prompt</text>\n";
  for (std::size_t j = 0; j <= n; ++j) {
    const std::string label = j < n ? r.case_ids[j] : "generic";
    o << "<text x=\"" << kLeft + kCell * static_cast<int>(j) + kCell / 2 << "\" y=\"" << kTop - 6
      << "\" text-anchor=\"middle\">" << escape_xml(label) << "</text>\n";
  }
  for (std::size_t i = 0; i < n; ++i) {
    const int y = kTop + kCell * static_cast<int>(i);
    o << "<text x=\"" << kLeft - 6 << "\" y=\"" << y + kCell / 2 + 4 << "\" text-anchor=\"end\">" << escape_xml(r.case_ids[i])
      << "</text>\n";
    for (std::size_t j = 0; j <= n; ++j) {
      const double v = j < n ? r.matrix[i][j] : r.generic[i];
      const int x = kLeft + kCell * static_cast<int>(j);
      o << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << kCell << "\" height=\"" << kCell << "\" fill=\""
        << fill(v) << "\" stroke=\"#fff\"/>\n";
      o << "<text x=\"" << x + kCell / 2 << "\" y=\"" << y + kCell / 2 + 4 << "\" text-anchor=\"middle\">" << fixed(v, 2)
        << "</text>\n";
    }
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

ordered_json to_json(const FragmentReport& r) {
  ordered_json j;
  j["experiment"] = "fragments";
  j["model_id"] = r.model_id;
  j["case_ids"] = r.case_ids;
  j["suppression_rate"] = r.suppression_rate;
  j["rows"] = ordered_json::array();
  for (const auto& row : r.rows) j["rows"].push_back(row_json(row));
  j["evaluations"] = ordered_json::array();
  for (const auto& e : r.evaluations) j["evaluations"].push_back(evaluation_json(e));
  return j;
}

FragmentReport fragment_report_from_json(const json& j) {
  FragmentReport r;
  r.model_id = j.at("model_id").get<std::string>();
  r.case_ids = j.at("case_ids").get<std::vector<std::string>>();
  r.suppression_rate = j.at("suppression_rate").get<double>();
  for (const auto& row : j.at("rows")) r.rows.push_back(row_from(row));
  for (const auto& e : j.at("evaluations")) r.evaluations.push_back(evaluation_from(e));
  return r;
}

ordered_json to_json(const PerturbationReport& r) {
  ordered_json j;
  j["experiment"] = "perturbation";
  j["model_id"] = r.model_id;
  j["threshold"] = r.threshold;
  j["case_ids"] = r.case_ids;
  j["categories"] = ordered_json::array();
  for (const auto& s : r.categories) {
    j["categories"].push_back({{"category", to_string(s.category)},
                               {"n", s.n},
                               {"median_abs_delta", s.median_abs_delta},
                               {"mean_delta", s.mean_delta},
                               {"catastrophic", s.catastrophic},
                               {"catastrophic_rate", s.catastrophic_rate},
                               {"zero_mask_rate", s.zero_mask_rate}});
  }
  j["outcomes"] = ordered_json::array();
  for (const auto& o : r.outcomes) {
    j["outcomes"].push_back({{"case_id", o.case_id},
                             {"category", to_string(o.category)},
                             {"substitution", o.substitution},
                             {"prompt", o.prompt},
                             {"matched_dsc", o.matched_dsc},
                             {"perturbed_dsc", o.perturbed_dsc},
                             {"delta_dsc", o.delta_dsc},
                             {"severity", to_string(o.severity)},
                             {"zero_mask", o.zero_mask},
                             {"failed", o.failed}});
  }
  j["warnings"] = r.warnings;
  return j;
}

PerturbationReport perturbation_report_from_json(const json& j) {
  PerturbationReport r;
  r.model_id = j.at("model_id").get<std::string>();
  r.threshold = j.at("threshold").get<double>();
  r.case_ids = j.at("case_ids").get<std::vector<std::string>>();
  for (const auto& c : j.at("categories")) {
    PerturbationSummary s;
    s.category = parse_perturbation_category(c.at("category").get<std::string>());
    s.n = c.at("n").get<std::size_t>();
    s.median_abs_delta = c.at("median_abs_delta").get<double>();
    s.mean_delta = c.at("mean_delta").get<double>();
    s.catastrophic = c.at("catastrophic").get<std::size_t>();
    s.catastrophic_rate = c.at("catastrophic_rate").get<double>();
    s.zero_mask_rate = c.at("zero_mask_rate").get<double>();
    r.categories.push_back(s);
  }
  for (const auto& x : j.at("outcomes")) {
    PerturbationOutcome o;
    o.case_id = x.at("case_id").get<std::string>();
    o.category = parse_perturbation_category(x.at("category").get<std::string>());
    o.substitution = x.at("substitution").get<std::string>();
    o.prompt = x.at("prompt").get<std::string>();
    o.matched_dsc = x.at("matched_dsc").get<double>();
    o.perturbed_dsc = x.at("perturbed_dsc").get<double>();
    o.delta_dsc = x.at("delta_dsc").get<double>();
    o.severity = severity_from(x.at("severity").get<std::string>());
    o.zero_mask = x.at("zero_mask").get<bool>();
    o.failed = x.at("failed").get<bool>();
    r.outcomes.push_back(std::move(o));
  }
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  return r;
}

ordered_json to_json(const LadderReport& r) {
  ordered_json j;
  j["experiment"] = "ladder";
  j["model_id"] = r.model_id;
  j["case_ids"] = r.case_ids;
  j["rows"] = ordered_json::array();
  for (const auto& row : r.rows) j["rows"].push_back(row_json(row));
  j["evaluations"] = ordered_json::array();
  for (const auto& e : r.evaluations) j["evaluations"].push_back(evaluation_json(e));
  return j;
}

LadderReport ladder_report_from_json(const json& j) {
  LadderReport r;
  r.model_id = j.at("model_id").get<std::string>();
  r.case_ids = j.at("case_ids").get<std::vector<std::string>>();
  for (const auto& row : j.at("rows")) r.rows.push_back(row_from(row));
  for (const auto& e : j.at("evaluations")) r.evaluations.push_back(evaluation_from(e));
  return r;
}

ordered_json to_json(const SwapReport& r) {
  ordered_json j;
  j["experiment"] = "swap";
  j["model_id"] = r.model_id;
  j["case_ids"] = r.case_ids;
  j["matrix"] = r.matrix;
  j["zero"] = r.zero;
  j["generic"] = r.generic;
  j["generic_zero"] = r.generic_zero;
  j["diagonal"] = summary_json(r.diagonal);
  j["offdiagonal"] = summary_json(r.offdiagonal);
  j["offdiag_zero_fraction"] = r.offdiag_zero_fraction;
  return j;
}

SwapReport swap_report_from_json(const json& j) {
  SwapReport r;
  r.model_id = j.at("model_id").get<std::string>();
  r.case_ids = j.at("case_ids").get<std::vector<std::string>>();
  r.matrix = j.at("matrix").get<std::vector<std::vector<double>>>();
  r.zero = j.at("zero").get<std::vector<std::vector<bool>>>();
  r.generic = j.at("generic").get<std::vector<double>>();
  r.generic_zero = j.at("generic_zero").get<std::vector<bool>>();
  r.diagonal = summary_from(j.at("diagonal"));
  r.offdiagonal = summary_from(j.at("offdiagonal"));
  r.offdiag_zero_fraction = j.at("offdiag_zero_fraction").get<double>();
  return r;
}

ordered_json to_json(const BenchmarkReport& r) {
  ordered_json j;
  j["experiment"] = "benchmark";
  j["alpha"] = r.alpha;
  j["case_ids"] = r.case_ids;
  j["models"] = ordered_json::array();
  for (std::size_t m = 0; m < r.models.size(); ++m) {
    const auto& row = r.models[m];
    ordered_json mj = {{"model_id", row.model_id},
                       {"category", row.category},
                       {"dsc", summary_json(row.dsc)},
                       {"failures", row.failures},
                       {"variants", row.variants},
                       {"per_case", r.dsc[m]},
                       {"failed", r.failed[m]}};
    j["models"].push_back(std::move(mj));
  }
  j["friedman"] = {{"chi2", r.friedman.chi2},
                   {"df", r.friedman.df},
                   {"p", r.friedman.p},
                   {"n_blocks", r.friedman.n_blocks},
                   {"k_treatments", r.friedman.k_treatments}};
  j["pairwise"] = ordered_json::array();
  for (const auto& pc : r.pairwise) {
    j["pairwise"].push_back({{"model_a", pc.model_a},
                             {"model_b", pc.model_b},
                             {"mean_diff", pc.mean_diff},
                             {"median_diff", pc.median_diff},
                             {"wilcoxon", wilcoxon_json(pc.wilcoxon)},
                             {"p_raw", pc.p_raw},
                             {"p_adj", pc.p_adj},
                             {"r", pc.r},
                             {"significant", pc.significant}});
  }
  return j;
}

BenchmarkReport benchmark_report_from_json(const json& j) {
  BenchmarkReport r;
  r.alpha = j.at("alpha").get<double>();
  r.case_ids = j.at("case_ids").get<std::vector<std::string>>();
  for (const auto& mj : j.at("models")) {
    ModelRow row;
    row.model_id = mj.at("model_id").get<std::string>();
    row.category = mj.at("category").get<std::string>();
    row.dsc = summary_from(mj.at("dsc"));
    row.failures = mj.at("failures").get<std::size_t>();
    row.variants = mj.at("variants").get<std::vector<std::string>>();
    r.models.push_back(std::move(row));
    r.dsc.push_back(mj.at("per_case").get<std::vector<double>>());
    r.failed.push_back(mj.at("failed").get<std::vector<bool>>());
  }
  const auto& f = j.at("friedman");
  r.friedman.chi2 = f.at("chi2").get<double>();
  r.friedman.df = f.at("df").get<std::size_t>();
  r.friedman.p = f.at("p").get<double>();
  r.friedman.n_blocks = f.at("n_blocks").get<std::size_t>();
  r.friedman.k_treatments = f.at("k_treatments").get<std::size_t>();
  for (const auto& pj : j.at("pairwise")) {
    PairwiseComparison pc;
    pc.model_a = pj.at("model_a").get<std::string>();
    pc.model_b = pj.at("model_b").get<std::string>();
    pc.mean_diff = pj.at("mean_diff").get<double>();
    pc.median_diff = pj.at("median_diff").get<double>();
    pc.wilcoxon = wilcoxon_from(pj.at("wilcoxon"));
    pc.p_raw = pj.at("p_raw").get<double>();
    pc.p_adj = pj.at("p_adj").get<double>();
    pc.r = pj.at("r").get<double>();
    pc.significant = pj.at("significant").get<bool>();
    r.pairwise.push_back(std::move(pc));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

ordered_json run_metadata(const ExperimentConfig& cfg, const std::map<std::string, adapter::AdapterInfo>& adapters,
                          const std::vector<std::string>& files) {
  ordered_json j;
  j["config_hash"] = config_hash(cfg);
  j["seed"] = cfg.seed;
  j["alpha"] = cfg.stats.alpha;
  j["catastrophic_threshold"] = cfg.catastrophic_threshold;
  j["wilcoxon_exact_threshold"] = cfg.stats.exact_threshold;
  j["conventions"] = {
      {"dsc_both_empty", "1.0"},
      {"dsc_one_empty", "0.0"},
      {"adapter_failure", "scored as empty mask (DSC 0) and flagged"},
      {"wilcoxon_zero_differences", "dropped before ranking"},
      {"wilcoxon_ties", "average ranks; exact distribution only without ties"},
      {"wilcoxon_continuity_correction", 0.5},
      {"effect_size_r", "|z| / sqrt(n_cases)"},
      {"multiple_comparisons", "Benjamini-Hochberg over the full pairwise family"},
      {"catastrophic", "|delta_dsc| > threshold"},
      {"perturbation_delta_pooling", "pooled across cases before the median"},
  };
  ordered_json aj = ordered_json::object();
  for (const auto& [id, info] : adapters) {
    aj[id] = {{"name", info.name}, {"version", info.version}, {"protocol_version", info.protocol_version}};
  }
  j["adapters"] = std::move(aj);
  j["files"] = files;
  return j;
}

std::vector<std::string> write_reports(const RunReports& reports, const ExperimentConfig& cfg,
                                       const std::map<std::string, adapter::AdapterInfo>& adapters,
                                       const fs::path& output_dir) {
  fs::create_directories(output_dir);
  std::vector<std::string> files;
  const auto emit = [&](const std::string& name, const std::string& content) {
    io::atomic_write(output_dir / name, content);
    files.push_back(name);
  };
  const auto emit_json = [&](const std::string& name, const ordered_json& j) { emit(name, j.dump(2) + "\n"); };

  if (reports.fragments) {
    const auto& r = *reports.fragments;
    emit_json("fragments.json", to_json(r));
    emit("fragments.csv", condition_csv(r.rows, "condition"));
    emit("fragments_per_case.csv", evaluations_csv(r.evaluations, "condition"));
  }
  if (reports.perturbation) {
    const auto& r = *reports.perturbation;
    emit_json("perturbation.json", to_json(r));
    std::string csv = "category,n,median_abs_delta,mean_delta,catastrophic,catastrophic_rate,zero_mask_rate\n";
    for (const auto& s : r.categories) {
      csv += std::string(to_string(s.category)) + "," + std::to_string(s.n) + "," + fixed(s.median_abs_delta, 6) + "," +
             fixed(s.mean_delta, 6) + "," + std::to_string(s.catastrophic) + "," + fixed(s.catastrophic_rate, 6) + "," +
             fixed(s.zero_mask_rate, 6) + "\n";
    }
    emit("perturbation.csv", csv);
    std::string long_csv = "case_id,category,substitution,matched_dsc,perturbed_dsc,delta_dsc,severity,zero_mask,failed\n";
    for (const auto& o : r.outcomes) {
      long_csv += csv_field(o.case_id) + "," + std::string(to_string(o.category)) + "," + csv_field(o.substitution) + "," +
                  fixed(o.matched_dsc, 6) + "," + fixed(o.perturbed_dsc, 6) + "," + fixed(o.delta_dsc, 6) + "," +
                  std::string(to_string(o.severity)) + "," + csv_bool(o.zero_mask) + "," + csv_bool(o.failed) + "\n";
    }
    emit("perturbation_per_case.csv", long_csv);
  }
  if (reports.ladder) {
    const auto& r = *reports.ladder;
    emit_json("ladder.json", to_json(r));
    emit("ladder.csv", condition_csv(r.rows, "level"));
    emit("ladder_per_case.csv", evaluations_csv(r.evaluations, "level"));
    emit("ladder.svg", ladder_svg(r));
  }
  if (reports.swap) {
    const auto& r = *reports.swap;
    emit_json("swap.json", to_json(r));
    std::string csv = "image";
    for (const auto& id : r.case_ids) csv += "," + csv_field(id);
    csv += ",generic\n";
    for (std::size_t i = 0; i < r.case_ids.size(); ++i) {
      csv += csv_field(r.case_ids[i]);
      for (double v : r.matrix[i]) csv += "," + fixed(v, 6);
      csv += "," + fixed(r.generic[i], 6) + "\n";
    }
    emit("swap_matrix.csv", csv);
    emit("swap.svg", swap_svg(r));
  }
  if (reports.benchmark) {
    const auto& r = *reports.benchmark;
    emit_json("benchmark.json", to_json(r));
    std::string table = "model,category,n,mean,sd,median,failures\n";
    for (const auto& m : r.models) {
      table += csv_field(m.model_id) + "," + csv_field(m.category) + "," + std::to_string(m.dsc.n) + "," +
               fixed(m.dsc.mean, 6) + "," + fixed(m.dsc.sd, 6) + "," + fixed(m.dsc.median, 6) + "," +
               std::to_string(m.failures) + "\n";
    }
    emit("benchmark_table.csv", table);
    std::string per_case = "model,case_id,dsc,failed\n";
    for (std::size_t m = 0; m < r.models.size(); ++m) {
      for (std::size_t c = 0; c < r.case_ids.size(); ++c) {
        per_case += csv_field(r.models[m].model_id) + "," + csv_field(r.case_ids[c]) + "," + fixed(r.dsc[m][c], 6) + "," +
                    csv_bool(r.failed[m][c]) + "\n";
      }
    }
    emit("benchmark_per_case.csv", per_case);
    std::string pairwise = "model_a,model_b,mean_diff,median_diff,n_used,w_plus,w_minus,z,method,p_raw,p_adj,r,significant\n";
    for (const auto& pc : r.pairwise) {
      pairwise += csv_field(pc.model_a) + "," + csv_field(pc.model_b) + "," + fixed(pc.mean_diff, 6) + "," +
                  fixed(pc.median_diff, 6) + "," + std::to_string(pc.wilcoxon.n_used) + "," + fixed(pc.wilcoxon.w_plus, 1) +
                  "," + fixed(pc.wilcoxon.w_minus, 1) + "," + fixed(pc.wilcoxon.z, 6) + "," +
                  std::string(stats::to_string(pc.wilcoxon.method)) + "," + fixed(pc.p_raw, 10) + "," +
                  fixed(pc.p_adj, 10) + "," + fixed(pc.r, 6) + "," + csv_bool(pc.significant) + "\n";
    }
    emit("benchmark_pairwise.csv", pairwise);
  }
  if (!reports.conformance.empty()) {
    ordered_json j = ordered_json::array();
    for (const auto& c : reports.conformance) j.push_back(adapter::to_json(c));
    emit_json("conformance.json", j);
  }

  files.push_back("run_metadata.json");
  std::sort(files.begin(), files.end());
  io::atomic_write(output_dir / "run_metadata.json", run_metadata(cfg, adapters, files).dump(2) + "\n");
  return files;
}

// ---------------------------------------------------------------------------
// Text
// ---------------------------------------------------------------------------

std::string format_dsc(double v) { return fixed(v, 3); }

std::string format_mean_sd(const stats::SummaryStats& s) { return format_dsc(s.mean) + "±" + format_dsc(s.sd); }

std::string format_summary(const stats::SummaryStats& s) {
  return format_mean_sd(s) + ", median " + format_dsc(s.median);
}

std::string format_perturbation_row(const PerturbationSummary& s) {
  std::string mean = fixed(s.mean_delta, 3);
  if (mean.front() == '-') mean.replace(0, 1, "−");
  return percent(s.catastrophic_rate, 1) + " catastrophic, mean ΔDSC " + mean;
}

std::string format_swap_summary(const SwapReport& r) {
  return "matched " + format_mean_sd(r.diagonal) + ", mismatched " + format_mean_sd(r.offdiagonal) + ", " +
         percent(r.offdiag_zero_fraction, 0) + " zero";
}

std::string print_table(const BenchmarkReport& r) {
  std::vector<std::size_t> order(r.models.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return r.models[a].dsc.mean > r.models[b].dsc.mean; });

  std::size_t model_w = 5, cat_w = 8;
  for (const auto& m : r.models) {
    model_w = std::max(model_w, m.model_id.size());
    cat_w = std::max(cat_w, m.category.size());
  }
  std::string out = pad("Model", model_w) + "  " + pad("Category", cat_w) + "  " + pad("Mean DSC", 11) + "  Median\n";
  for (std::size_t i : order) {
    const auto& m = r.models[i];
    out += pad(m.model_id, model_w) + "  " + pad(m.category, cat_w) + "  " + pad(format_mean_sd(m.dsc), 11) + "  " +
           format_dsc(m.dsc.median) + "\n";
  }
  return out;
}

std::string print_fragments(const FragmentReport& r) {
  std::string out = "Fragments (" + r.model_id + ", " + std::to_string(r.case_ids.size()) + " cases)\n";
  for (const auto& row : r.rows) {
    out += "  " + pad(row.label, 22) + pad(format_mean_sd(row.dsc), 13) + "zero " + percent(row.zero_mask_rate, 0) + "\n";
  }
  out += "  suppression rate " + percent(r.suppression_rate, 0) + "\n";
  return out;
}

std::string print_perturbation(const PerturbationReport& r) {
  std::string out = "Perturbations (" + r.model_id + ", threshold " + fixed(r.threshold, 2) + ")\n";
  for (const auto& s : r.categories) {
    out += "  " + pad(std::string(to_string(s.category)), 15) + "n=" + pad(std::to_string(s.n), 5) +
           format_perturbation_row(s) + "\n";
  }
  for (const auto& w : r.warnings) out += "  warning: " + w + "\n";
  return out;
}

std::string print_ladder(const LadderReport& r) {
  std::string out = "Prompt ladder (" + r.model_id + ")\n";
  for (const auto& row : r.rows) out += "  " + pad(row.label, 4) + format_mean_sd(row.dsc) + "\n";
  return out;
}

std::string print_swap(const SwapReport& r) {
  std::string out = "Swap grid (" + r.model_id + ")\n";
  std::size_t w = 9;
  for (const auto& id : r.case_ids) w = std::max(w, id.size() + 2);
  out += "  " + pad("", w);
  for (const auto& id : r.case_ids) out += pad(id, w);
  out += "generic\n";
  for (std::size_t i = 0; i < r.case_ids.size(); ++i) {
    out += "  " + pad(r.case_ids[i], w);
    for (double v : r.matrix[i]) out += pad(format_dsc(v), w);
    out += format_dsc(r.generic[i]) + "\n";
  }
  out += "  " + format_swap_summary(r) + "\n";
  return out;
}

std::string print_pairwise(const BenchmarkReport& r) {
  std::string out = "Friedman chi2=" + fixed(r.friedman.chi2, 3) + " df=" + std::to_string(r.friedman.df) +
                    " p=" + fixed(r.friedman.p, 6) + "\n";
  for (const auto& pc : r.pairwise) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3e", pc.p_adj);
    out += "  " + pc.model_a + " vs " + pc.model_b + ": diff " + format_dsc(pc.mean_diff) + ", r=" + fixed(pc.r, 3) +
           ", p_adj=" + buf + (pc.significant ? " *" : "") + "\n";
  }
  return out;
}

}  // namespace probe::experiments
