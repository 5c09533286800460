#include <algorithm>
#include <set>

#include "probe/experiments.hpp"
#include "probe/io.hpp"

namespace probe::experiments {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

void check_keys(const json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError(std::string(where) + ": unknown key \"" + key + "\"");
    }
  }
}

adapter::AdapterEndpoint parse_endpoint(const json& j) {
  check_keys(j, "endpoint",
             {"model_id", "transport", "mock", "noise", "mismatch_zero_prob", "radius", "erode", "command",
              "base_url", "max_inflight", "timeout", "retries", "category", "prompted", "variant_of"});
  adapter::AdapterEndpoint ep;
  ep.model_id = j.at("model_id").get<std::string>();
  const std::string transport = j.value("transport", "builtin");
  if (transport == "builtin") {
    adapter::BuiltinTransport b;
    b.mock.type = phantom::parse_mock_type(j.value("mock", ep.model_id));
    b.mock.noise = j.value("noise", b.mock.noise);
    b.mock.mismatch_zero_prob = j.value("mismatch_zero_prob", b.mock.mismatch_zero_prob);
    b.mock.radius = j.value("radius", b.mock.radius);
    b.mock.erode = j.value("erode", b.mock.erode);
    if (b.mock.noise < 0 || b.mock.radius < 0 || b.mock.mismatch_zero_prob < 0 || b.mock.mismatch_zero_prob > 1) {
      throw ConfigError("endpoint " + ep.model_id + ": mock parameters out of range");
    }
    ep.transport = b;
  } else if (transport == "subprocess") {
    adapter::SubprocessTransport s;
    s.argv = j.at("command").get<std::vector<std::string>>();
    if (s.argv.empty()) throw ConfigError("endpoint " + ep.model_id + ": empty command");
    ep.transport = s;
  } else if (transport == "http") {
    ep.transport = adapter::HttpTransport{j.at("base_url").get<std::string>()};
  } else {
    throw ConfigError("endpoint " + ep.model_id + ": unknown transport \"" + transport + "\"");
  }
  const auto inflight = j.value("max_inflight", std::int64_t{1});
  if (inflight < 1) throw ConfigError("endpoint " + ep.model_id + ": max_inflight must be >= 1");
  ep.max_inflight = static_cast<std::size_t>(inflight);
  ep.timeout_seconds = j.value("timeout", ep.timeout_seconds);
  if (!(ep.timeout_seconds > 0)) throw ConfigError("endpoint " + ep.model_id + ": timeout must be > 0");
  ep.retries = j.value("retries", ep.retries);
  ep.category = j.value("category", "");
  ep.prompted = j.value("prompted", true);
  ep.variant_of = j.value("variant_of", "");
  return ep;
}

ordered_json endpoint_to_json(const adapter::AdapterEndpoint& ep) {
  ordered_json j;
  j["model_id"] = ep.model_id;
  std::visit(
      [&](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, adapter::BuiltinTransport>) {
          j["transport"] = "builtin";
          j["mock"] = phantom::to_string(t.mock.type);
          j["noise"] = t.mock.noise;
          j["mismatch_zero_prob"] = t.mock.mismatch_zero_prob;
          j["radius"] = t.mock.radius;
          j["erode"] = t.mock.erode;
        } else if constexpr (std::is_same_v<T, adapter::SubprocessTransport>) {
          j["transport"] = "subprocess";
          j["command"] = t.argv;
        } else {
          j["transport"] = "http";
          j["base_url"] = t.base_url;
        }
      },
      ep.transport);
  j["max_inflight"] = ep.max_inflight;
  j["timeout"] = ep.timeout_seconds;
  j["retries"] = ep.retries;
  j["category"] = ep.category;
  j["prompted"] = ep.prompted;
  j["variant_of"] = ep.variant_of;
  return j;
}

}  // namespace

adapter::AdapterEndpoint builtin_endpoint(std::string_view name) {
  adapter::AdapterEndpoint ep;
  ep.model_id = std::string(name);
  adapter::BuiltinTransport b;
  b.mock.type = phantom::parse_mock_type(name);
  ep.transport = b;
  ep.category = "Mock";
  return ep;
}

ExperimentConfig parse_config(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  check_keys(j, "config",
             {"dataset_manifest", "endpoints", "pools", "templates", "thresholds", "stats", "alignment", "phantom",
              "seed", "output_dir", "cache_dir"});
  ExperimentConfig cfg;
  try {
    cfg.dataset_manifest = resolve(base_dir, j.value("dataset_manifest", ""));
    cfg.output_dir = resolve(base_dir, j.value("output_dir", ""));
    cfg.cache_dir = resolve(base_dir, j.value("cache_dir", ""));
    cfg.seed = j.value("seed", std::uint64_t{0});

    std::set<std::string> ids;
    for (const auto& e : j.value("endpoints", json::array())) {
      auto ep = parse_endpoint(e);
      if (!ids.insert(ep.model_id).second) throw ConfigError("duplicate endpoint model_id \"" + ep.model_id + "\"");
      cfg.endpoints.push_back(std::move(ep));
    }

    if (j.contains("pools")) {
      for (const auto& [key, values] : j.at("pools").items()) {
        const auto cat = parse_perturbation_category(key);
        if (cat == PerturbationCategory::control) throw ConfigError("pools: control prompts are fixed");
        cfg.pools[cat] = values.get<std::vector<std::string>>();
      }
    }
    if (j.contains("templates")) {
      const auto& t = j.at("templates");
      check_keys(t, "templates", {"full", "fabricated_detail", "control_organ"});
      cfg.templates.full = t.value("full", cfg.templates.full);
      cfg.templates.fabricated_detail = t.value("fabricated_detail", cfg.templates.fabricated_detail);
      cfg.templates.control_organ = t.value("control_organ", cfg.templates.control_organ);
      render_template(cfg.templates.full, PromptAttributes{});  // rejects unknown placeholders
    }
    if (j.contains("thresholds")) {
      check_keys(j.at("thresholds"), "thresholds", {"catastrophic"});
      cfg.catastrophic_threshold = j.at("thresholds").value("catastrophic", cfg.catastrophic_threshold);
    }
    if (j.contains("stats")) {
      const auto& s = j.at("stats");
      check_keys(s, "stats", {"alpha", "exact_threshold", "exclude_pairs", "reference_model"});
      cfg.stats.alpha = s.value("alpha", cfg.stats.alpha);
      cfg.stats.exact_threshold = s.value("exact_threshold", cfg.stats.exact_threshold);
      for (const auto& pair : s.value("exclude_pairs", json::array())) {
        const auto names = pair.get<std::vector<std::string>>();
        if (names.size() != 2) throw ConfigError("stats.exclude_pairs entries must be [model_a, model_b]");
        cfg.excluded_pairs.emplace_back(names[0], names[1]);
      }
      cfg.reference_model = s.value("reference_model", "");
    }
    if (j.contains("alignment")) {
      const auto& a = j.at("alignment");
      check_keys(a, "alignment", {"cases", "swap_cases", "perturbation_cap"});
      cfg.alignment.cases = a.value("cases", cfg.alignment.cases);
      cfg.alignment.swap_cases = a.value("swap_cases", cfg.alignment.swap_cases);
      if (a.contains("perturbation_cap") && !a.at("perturbation_cap").is_null()) {
        cfg.alignment.perturbation_cap = a.at("perturbation_cap").get<std::size_t>();
      }
    }
    if (j.contains("phantom")) {
      const auto& p = j.at("phantom");
      check_keys(p, "phantom", {"dims", "spacing", "n_cases", "lesion_radius"});
      if (p.contains("dims")) {
        const auto d = p.at("dims").get<std::vector<std::int64_t>>();
        if (d.size() != 3) throw ConfigError("phantom.dims must have 3 entries");
        cfg.phantom.dims = {d[0], d[1], d[2]};
      }
      if (p.contains("spacing")) {
        const auto s = p.at("spacing").get<std::vector<double>>();
        if (s.size() != 3) throw ConfigError("phantom.spacing must have 3 entries");
        cfg.phantom.spacing = {s[0], s[1], s[2]};
      }
      cfg.phantom.n_cases = p.value("n_cases", cfg.phantom.n_cases);
      if (p.contains("lesion_radius")) {
        const auto r = p.at("lesion_radius").get<std::vector<std::int64_t>>();
        if (r.size() != 2) throw ConfigError("phantom.lesion_radius must be [min, max]");
        cfg.phantom.radius_min = r[0];
        cfg.phantom.radius_max = r[1];
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  if (!(cfg.catastrophic_threshold > 0)) throw ConfigError("thresholds.catastrophic must be > 0");
  if (!(cfg.stats.alpha > 0 && cfg.stats.alpha < 1)) throw ConfigError("stats.alpha must lie in (0, 1)");
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  } catch (const IoError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return parse_config(j, path.parent_path());
}

ordered_json config_to_json(const ExperimentConfig& cfg) {
  ordered_json j;
  j["dataset_manifest"] = cfg.dataset_manifest.generic_string();
  auto& eps = j["endpoints"] = ordered_json::array();
  for (const auto& ep : cfg.endpoints) eps.push_back(endpoint_to_json(ep));
  auto& pools = j["pools"] = ordered_json::object();
  for (PerturbationCategory c : kPerturbationCategories) {
    if (auto it = cfg.pools.find(c); it != cfg.pools.end()) pools[std::string(to_string(c))] = it->second;
  }
  j["templates"] = {{"full", cfg.templates.full},
                    {"fabricated_detail", cfg.templates.fabricated_detail},
                    {"control_organ", cfg.templates.control_organ}};
  j["thresholds"] = {{"catastrophic", cfg.catastrophic_threshold}};
  ordered_json excluded = ordered_json::array();
  for (const auto& [a, b] : cfg.excluded_pairs) excluded.push_back({a, b});
  j["stats"] = {{"alpha", cfg.stats.alpha},
                {"exact_threshold", cfg.stats.exact_threshold},
                {"exclude_pairs", excluded},
                {"reference_model", cfg.reference_model}};
  j["alignment"] = {{"cases", cfg.alignment.cases},
                    {"swap_cases", cfg.alignment.swap_cases},
                    {"perturbation_cap", cfg.alignment.perturbation_cap ? ordered_json(*cfg.alignment.perturbation_cap)
                                                                         : ordered_json(nullptr)}};
  j["phantom"] = {{"dims", {cfg.phantom.dims.nx, cfg.phantom.dims.ny, cfg.phantom.dims.nz}},
                  {"spacing", {cfg.phantom.spacing.sx, cfg.phantom.spacing.sy, cfg.phantom.spacing.sz}},
                  {"n_cases", cfg.phantom.n_cases},
                  {"lesion_radius", {cfg.phantom.radius_min, cfg.phantom.radius_max}}};
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir.generic_string();
  j["cache_dir"] = cfg.cache_dir.generic_string();
  return j;
}

std::string config_hash(const ExperimentConfig& cfg) {
  ordered_json j = config_to_json(cfg);
  j.erase("output_dir");
  j.erase("cache_dir");
  return io::sha256_hex(j.dump());
}

}  // namespace probe::experiments
