#include <gtest/gtest.h>

#include "json.hpp"
#include "support.hpp"

using namespace probe;
namespace fs = std::filesystem;

namespace {

const std::string kCli = PROBE_CLI;

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

class CliTest : public ::testing::Test {
 protected:
  test::RunResult run(const std::string& args) { return test::run_command(kCli + " " + args, scratch_.path()); }

  fs::path write_config(const std::string& extra = "") {
    const fs::path path = work_ / "config.json";
    io::atomic_write(path, R"({"dataset_manifest": ")" + (work_ / "data" / "manifest.json").string() +
                             R"(", "endpoints": [
        {"model_id": "location_oracle", "transport": "builtin", "mock": "location_oracle"},
        {"model_id": "noisy_oracle", "transport": "builtin", "mock": "noisy_oracle"},
        {"model_id": "null_model", "transport": "builtin", "mock": "null_model"}
      ], "alignment": {"cases": 5, "swap_cases": 4}, "seed": 9)" +
                             extra + "}");
    return path;
  }

  void generate(std::size_t n) {
    const auto r = run("phantom-generate --n " + std::to_string(n) + " --seed 42 --out " + q(work_ / "data"));
    ASSERT_EQ(r.exit_code, 0) << r.err;
  }

  test::TempDir scratch_;
  test::TempDir work_;
};

}  // namespace

TEST_F(CliTest, PhantomGenerateWritesManifestAndVolumes) {
  generate(25);
  const auto files = test::snapshot_tree(work_ / "data");
  EXPECT_EQ(files.size(), 51u);
  const auto manifest = nlohmann::json::parse(files.at("manifest.json"));
  ASSERT_EQ(manifest.size(), 25u);
  EXPECT_EQ(manifest[0].at("case_id"), "phantom_001");
}

TEST_F(CliTest, PhantomGenerateIsSeedDeterministic) {
  generate(4);
  const auto first = test::snapshot_tree(work_ / "data");
  fs::remove_all(work_ / "data");
  generate(4);
  EXPECT_EQ(first, test::snapshot_tree(work_ / "data"));
  ASSERT_EQ(run("phantom-generate --n 4 --seed 43 --out " + q(work_ / "other")).exit_code, 0);
  EXPECT_NE(first.at("manifest.json"), io::read_file(work_ / "other" / "manifest.json"));
}

TEST_F(CliTest, AlignmentAllWritesEveryReport) {
  generate(6);
  const auto cfg = write_config();
  const auto r = run("alignment all --config " + q(cfg) + " --model location_oracle --out " + q(work_ / "out"));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  for (const char* f : {"fragments.json", "perturbation.json", "ladder.json", "swap.json", "swap_matrix.csv",
                        "ladder.svg", "swap.svg", "run_metadata.json"}) {
    EXPECT_TRUE(fs::exists(work_ / "out" / f)) << f;
  }
  EXPECT_NE(r.out.find("catastrophic"), std::string::npos);
  EXPECT_NE(r.out.find("matched"), std::string::npos);
  const auto meta = nlohmann::json::parse(io::read_file(work_ / "out" / "run_metadata.json"));
  EXPECT_EQ(meta.at("seed"), 9);
}

TEST_F(CliTest, SeedFlagOverridesConfig) {
  generate(4);
  const auto cfg = write_config();
  ASSERT_EQ(run("alignment ladder --config " + q(cfg) + " --model location_oracle --seed 77 --out " + q(work_ / "o"))
                .exit_code,
            0);
  const auto meta = nlohmann::json::parse(io::read_file(work_ / "o" / "run_metadata.json"));
  EXPECT_EQ(meta.at("seed"), 77);
}

TEST_F(CliTest, RepeatedRunsAreByteIdentical) {
  generate(5);
  const auto cfg = write_config();
  const std::string env = "PROBE_CACHE_DIR=" + q(work_ / "cache") + " ";
  for (const char* dir : {"a", "b"}) {
    const auto r = test::run_command(
        env + kCli + " alignment all --config " + q(cfg) + " --model location_oracle --out " + q(work_ / dir),
        scratch_.path());
    ASSERT_EQ(r.exit_code, 0) << r.err;
  }
  EXPECT_EQ(test::snapshot_tree(work_ / "a"), test::snapshot_tree(work_ / "b"));
}

TEST_F(CliTest, BenchmarkPrintsTableAndJson) {
  generate(8);
  const auto cfg = write_config();
  const auto r = run("benchmark --config " + q(cfg) + " --out " + q(work_ / "bench") + " --stdout");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("benchmark").at("pairwise").size(), 3u);
  EXPECT_NE(r.err.find("Mean DSC     Median"), std::string::npos);
  EXPECT_TRUE(fs::exists(work_ / "bench" / "benchmark_table.csv"));
}

TEST_F(CliTest, ReportCommandRendersSavedRun) {
  generate(5);
  const auto cfg = write_config();
  ASSERT_EQ(run("alignment fragments --config " + q(cfg) + " --model location_oracle --out " + q(work_ / "run"))
                .exit_code,
            0);
  const auto r = run("report --in " + q(work_ / "run"));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NE(r.out.find("irrelevant"), std::string::npos);
  const auto again = run("report --in " + q(work_ / "run") + " --config " + q(cfg) + " --out " + q(work_ / "re"));
  ASSERT_EQ(again.exit_code, 0) << again.err;
  EXPECT_EQ(io::read_file(work_ / "run" / "fragments.csv"), io::read_file(work_ / "re" / "fragments.csv"));
}

TEST_F(CliTest, ConformanceWithIdentityAdapter) {
  generate(3);
  const auto cfg = write_config(R"(, "endpoints": [{"model_id": "ext", "transport": "subprocess", "command": [")" +
                                std::string(PROBE_MOCK_ADAPTER) + R"(", "--manifest", ")" +
                                (work_ / "data" / "manifest.json").string() + R"(", "--mock", "identity"]}])");
  // Duplicate "endpoints" keys: the later value wins in the JSON parser.
  const auto r = run("conformance --config " + q(cfg) + " --expect-truth");
  EXPECT_EQ(r.exit_code, 0) << r.out << r.err;
  const auto bad = run("conformance --config " + q(cfg) + " --model null_model --expect-truth");
  EXPECT_EQ(bad.exit_code, 1);
}

TEST_F(CliTest, UnknownSubcommandExitsWithUsage) {
  const auto r = run("bogus");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("phantom-generate"), std::string::npos);
  EXPECT_EQ(run("alignment sideways --out x").exit_code, 2);
}

TEST_F(CliTest, ConfigErrorsExitTwo) {
  const fs::path cfg = work_ / "bad.json";
  io::atomic_write(cfg, R"({"unexpected": true})");
  EXPECT_EQ(run("benchmark --config " + q(cfg)).exit_code, 2);
  EXPECT_EQ(run("benchmark --config " + q(work_ / "missing.json")).exit_code, 2);
  generate(3);
  EXPECT_EQ(run("alignment ladder --config " + q(write_config()) + " --model nonsense --out " + q(work_ / "x")).exit_code,
            2);
}

TEST_F(CliTest, RuntimeFailuresExitOne) {
  generate(3);
  const auto cfg = write_config();
  fs::remove(work_ / "data" / "gtv" / "phantom_002.pvol");
  const auto r = run("benchmark --config " + q(cfg) + " --out " + q(work_ / "x"));
  EXPECT_EQ(r.exit_code, 1) << r.err;
}
