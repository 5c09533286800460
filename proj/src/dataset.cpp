#include "probe/dataset.hpp"

#include <set>

#include "probe/io.hpp"

namespace probe {

namespace fs = std::filesystem;

nlohmann::ordered_json attributes_to_json(const PromptAttributes& a) {
  nlohmann::ordered_json j;
  j["histology"] = a.histology;
  j["age"] = a.age;
  j["sex"] = to_string(a.sex);
  j["t_stage"] = a.t_stage;
  j["n_stage"] = a.n_stage;
  j["m_stage"] = a.m_stage;
  j["overall_stage"] = a.overall_stage;
  j["laterality"] = to_string(a.laterality);
  j["location"] = a.location;
  if (a.extra_findings) j["extra_findings"] = *a.extra_findings;
  return j;
}

PromptAttributes attributes_from_json(const nlohmann::json& j, const std::string& case_id) {
  if (!j.is_object()) throw ConfigError("case \"" + case_id + "\": attributes must be an object");
  PromptAttributes a;
  a.case_id = case_id;
  try {
    a.histology = j.value("histology", "");
    a.age = j.value("age", 0);
    a.sex = parse_sex(j.value("sex", "male"));
    a.t_stage = j.value("t_stage", "");
    a.n_stage = j.value("n_stage", "");
    a.m_stage = j.value("m_stage", "");
    a.overall_stage = j.value("overall_stage", "");
    a.location = j.value("location", "");
    if (j.contains("laterality")) {
      a.laterality = parse_laterality(j.at("laterality").get<std::string>());
    } else if (auto lat = laterality_of(a.location)) {
      a.laterality = *lat;
    }
    if (j.contains("extra_findings") && !j.at("extra_findings").is_null()) {
      a.extra_findings = j.at("extra_findings").get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("case \"" + case_id + "\": bad attributes: " + e.what());
  }
  if (auto lat = laterality_of(a.location); lat && *lat != a.laterality) {
    throw ConfigError("case \"" + case_id + "\": location \"" + a.location + "\" disagrees with laterality " +
                      std::string(to_string(a.laterality)));
  }
  return a;
}

std::vector<CaseRef> parse_manifest(const nlohmann::json& j, const fs::path& base_dir) {
  if (!j.is_array()) throw ConfigError("manifest must be a JSON array of cases");
  std::vector<CaseRef> cases;
  std::set<std::string> seen;
  for (const auto& entry : j) {
    try {
      CaseRef c;
      c.case_id = entry.at("case_id").get<std::string>();
      if (c.case_id.empty()) throw ConfigError("manifest: empty case_id");
      if (!seen.insert(c.case_id).second) throw ConfigError("manifest: duplicate case_id \"" + c.case_id + "\"");
      fs::path image = entry.at("image").get<std::string>();
      fs::path gtv = entry.at("gtv").get<std::string>();
      c.image = image.is_absolute() ? image : base_dir / image;
      c.gtv = gtv.is_absolute() ? gtv : base_dir / gtv;
      c.attributes = attributes_from_json(entry.value("attributes", nlohmann::json::object()), c.case_id);
      cases.push_back(std::move(c));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("manifest: bad case entry: ") + e.what());
    }
  }
  return cases;
}

std::vector<CaseRef> load_manifest(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("manifest " + path.string() + ": " + e.what());
  } catch (const IoError& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  }
  return parse_manifest(j, path.parent_path());
}

void save_manifest(const std::vector<CaseRef>& cases, const fs::path& path) {
  const fs::path base = path.parent_path();
  auto rel = [&](const fs::path& p) {
    return (base.empty() ? p : p.lexically_relative(base)).generic_string();
  };
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& c : cases) {
    nlohmann::ordered_json e;
    e["case_id"] = c.case_id;
    e["image"] = rel(c.image);
    e["gtv"] = rel(c.gtv);
    e["attributes"] = attributes_to_json(c.attributes);
    j.push_back(std::move(e));
  }
  io::atomic_write(path, j.dump(2) + "\n");
}

}  // namespace probe
