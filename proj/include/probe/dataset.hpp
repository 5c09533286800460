#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "probe/promptgen.hpp"

namespace probe {

/// One dataset case: image + ground-truth GTV on disk, plus prompt attributes.
struct CaseRef {
  std::string case_id;
  std::filesystem::path image;
  std::filesystem::path gtv;
  PromptAttributes attributes;
};

nlohmann::ordered_json attributes_to_json(const PromptAttributes& a);
/// `case_id` is taken from the enclosing manifest entry.
PromptAttributes attributes_from_json(const nlohmann::json& j, const std::string& case_id);

/// Parses a manifest array. Relative image/gtv paths resolve against `base_dir`.
std::vector<CaseRef> parse_manifest(const nlohmann::json& j, const std::filesystem::path& base_dir);
std::vector<CaseRef> load_manifest(const std::filesystem::path& path);

/// Writes `cases` with paths made relative to the manifest's directory.
void save_manifest(const std::vector<CaseRef>& cases, const std::filesystem::path& path);

}  // namespace probe
