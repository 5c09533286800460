#pragma once

#include <cstdlib>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

#include "probe/dataset.hpp"
#include "probe/io.hpp"
#include "probe/phantom.hpp"

namespace probe::test {

/// mkdtemp directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "probe-test-XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<CaseRef> make_phantoms(const std::filesystem::path& dir, std::size_t n, std::uint64_t seed = 42) {
  phantom::PhantomSpec spec;
  spec.n_cases = n;
  return phantom::generate_phantom_set(spec, seed, dir);
}

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

/// Runs a command through /bin/sh with stdout and stderr captured to files.
inline RunResult run_command(const std::string& cmd, const std::filesystem::path& scratch) {
  const auto out = scratch / "stdout.txt";
  const auto err = scratch / "stderr.txt";
  const std::string full = cmd + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(full.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = io::read_file(out);
  r.err = io::read_file(err);
  return r;
}

/// Relative path -> bytes for every regular file under `root`.
inline std::map<std::string, std::string> snapshot_tree(const std::filesystem::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[std::filesystem::relative(e.path(), root).string()] = io::read_file(e.path());
  }
  return files;
}

}  // namespace probe::test
