#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace probe::io {

/// Writes `bytes` to `path` through a sibling temp file and rename(2), so
/// readers never observe a partially written file. Creates parent dirs.
void atomic_write(const std::filesystem::path& path, std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

/// Lowercase hex SHA-256 of `bytes`.
std::string sha256_hex(std::string_view bytes);

}  // namespace probe::io
