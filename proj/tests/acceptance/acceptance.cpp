// Acceptance checks: one PASS/FAIL line per criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "probe/experiments.hpp"
#include "probe/rng.hpp"
#include "probe/stats.hpp"
#include "support.hpp"

using namespace probe;
using namespace probe::experiments;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 25 phantoms with seed 42, shared by the mock-behaviour checks.
struct Dataset {
  test::TempDir dir;
  std::vector<CaseRef> cases = test::make_phantoms(dir.path(), 25, 42);
};

Dataset& dataset() {
  static Dataset d;
  return d;
}

ExperimentConfig mock_config(const std::vector<std::string>& mocks, const fs::path& out) {
  ExperimentConfig cfg;
  cfg.dataset_manifest = dataset().dir.path() / "manifest.json";
  for (const auto& m : mocks) cfg.endpoints.push_back(builtin_endpoint(m));
  cfg.alignment.cases = 0;
  cfg.output_dir = out;
  cfg.seed = 42;
  return cfg;
}

MaskVolume random_mask(SplitMix64& rng, double density) {
  MaskVolume m(Dims{16, 16, 16}, Spacing{});
  for (std::int64_t z = 0; z < 16; ++z)
    for (std::int64_t y = 0; y < 16; ++y)
      for (std::int64_t x = 0; x < 16; ++x) m.set(x, y, z, rng.uniform() < density);
  return m;
}

Outcome dsc_oracle() {
  SplitMix64 rng(1);
  std::vector<std::pair<MaskVolume, MaskVolume>> pairs;
  for (int i = 0; i < 200; ++i) {
    // Include empty and full masks among the random densities.
    const double da = i % 50 == 0 ? 0.0 : rng.uniform();
    const double db = i % 50 == 1 ? 0.0 : i % 50 == 2 ? 1.0 : rng.uniform();
    pairs.emplace_back(random_mask(rng, da), random_mask(rng, db));
  }
  const auto t0 = Clock::now();
  std::vector<double> got;
  for (const auto& [a, b] : pairs) got.push_back(dice(a, b).value);
  const double elapsed = seconds_since(t0);
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) mismatches += got[i] != oracle::dice(pairs[i].first, pairs[i].second);
  return {mismatches == 0 && elapsed < 1.0, fmt("%zu/200 mismatches, %.3f s", mismatches, elapsed)};
}

std::vector<double> random_diffs(SplitMix64& rng, std::size_t n) {
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double mag = static_cast<double>(i + 1) + 0.5 * rng.uniform();
    d[i] = rng.uniform() < 0.5 ? -mag : mag;
  }
  for (std::size_t i = n; i > 1; --i) std::swap(d[i - 1], d[rng.below(i)]);
  return d;
}

Outcome wilcoxon_exactness() {
  SplitMix64 rng(2024);
  double worst_exact = 0.0, worst_normal = 0.0;
  bool methods_ok = true;
  stats::StatsConfig approx;
  approx.exact_threshold = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto d = random_diffs(rng, 3 + rng.below(10));
    const std::vector<double> zero(d.size(), 0.0);
    const auto r = stats::wilcoxon_signed_rank(d, zero);
    methods_ok &= r.method == stats::WilcoxonMethod::exact;
    worst_exact = std::max(worst_exact, std::abs(r.p_two_sided - oracle::wilcoxon_enumerated_p(d)));
  }
  for (int trial = 0; trial < 100; ++trial) {
    const auto d = random_diffs(rng, 10 + rng.below(16));
    const std::vector<double> zero(d.size(), 0.0);
    const auto exact = stats::wilcoxon_signed_rank(d, zero);
    const auto normal = stats::wilcoxon_signed_rank(d, zero, approx);
    methods_ok &= exact.method == stats::WilcoxonMethod::exact && normal.method == stats::WilcoxonMethod::normal_approx;
    worst_normal = std::max(worst_normal, std::abs(exact.p_two_sided - normal.p_two_sided));
  }
  return {methods_ok && worst_exact <= 1e-12 && worst_normal <= 0.02,
          fmt("max |exact - enumerated| %.2e, max |exact - normal| %.4f", worst_exact, worst_normal)};
}

Outcome bh_correctness() {
  const std::vector<double> fixture{0.01, 0.02, 0.03, 0.04, 0.05};
  const auto adj = stats::bh_adjust(fixture);
  bool fixture_ok = true;
  for (double a : adj) fixture_ok &= std::abs(a - 0.05) < 1e-15;

  SplitMix64 rng(5);
  bool ge_raw = true, invariant = true, matches_oracle = true;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> p(2 + rng.below(40));
    for (double& v : p) v = rng.uniform() < 0.2 ? 0.5 : rng.uniform() * 0.2;
    const auto a = stats::bh_adjust(p);
    const auto ref = oracle::bh(p);
    std::vector<std::size_t> perm(p.size());
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    std::vector<double> shuffled(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) shuffled[i] = p[perm[i]];
    const auto b = stats::bh_adjust(shuffled);
    for (std::size_t i = 0; i < p.size(); ++i) {
      ge_raw &= a[i] >= p[i];
      invariant &= b[i] == a[perm[i]];
      matches_oracle &= std::abs(a[i] - std::max(ref[i], p[i])) < 1e-15;
    }
  }
  return {fixture_ok && ge_raw && invariant && matches_oracle,
          fmt("fixture %s, adjusted>=raw %s, permutation-invariant %s, definition %s", fixture_ok ? "ok" : "bad",
              ge_raw ? "ok" : "bad", invariant ? "ok" : "bad", matches_oracle ? "ok" : "bad")};
}

Outcome tail_accuracy() {
  const double chi = stats::chi2_sf(2.0 * std::log(2.0), 2.0);
  const double nrm = stats::normal_sf(1.959964);
  bool monotone = true;
  double prev_c = 2.0, prev_n = 2.0;
  for (int i = 0; i < 1000; ++i) {
    const double x = 0.05 * i;
    const double c = stats::chi2_sf(x, 3.0);
    const double n = stats::normal_sf(x - 10.0);
    monotone &= c <= prev_c && n <= prev_n;
    prev_c = c;
    prev_n = n;
  }
  return {std::abs(chi - 0.5) <= 1e-10 && std::abs(nrm - 0.025) <= 1e-5 && monotone,
          fmt("chi2_sf(2ln2,2)=%.12f, normal_sf(1.959964)=%.7f, monotone %s", chi, nrm, monotone ? "yes" : "no")};
}

Outcome perturbation_asymmetry() {
  test::TempDir out;
  const auto t0 = Clock::now();
  Harness h(mock_config({"location_oracle"}, out.path()));
  const auto r = run_perturbation_experiment(h, "location_oracle");
  const double elapsed = seconds_since(t0);
  const auto& loc = r.categories[static_cast<std::size_t>(PerturbationCategory::location)];
  const auto& tt = r.categories[static_cast<std::size_t>(PerturbationCategory::tumor_type)];
  return {r.case_ids.size() == 25 && loc.catastrophic_rate >= 0.5 && tt.median_abs_delta <= 0.05 && elapsed < 30.0,
          fmt("%zu cases, location catastrophic %.3f, tumor_type median |dDSC| %.3f, %.2f s", r.case_ids.size(),
              loc.catastrophic_rate, tt.median_abs_delta, elapsed)};
}

Outcome swap_conditioning() {
  test::TempDir out;
  Harness h(mock_config({"location_oracle", "prompt_agnostic"}, out.path()));
  const auto lo = run_swap_experiment(h, "location_oracle");
  const auto pa = run_swap_experiment(h, "prompt_agnostic");
  const double gap_lo = lo.diagonal.mean - lo.offdiagonal.mean;
  const double gap_pa = pa.diagonal.mean - pa.offdiagonal.mean;
  return {lo.case_ids.size() == 5 && gap_lo >= 0.3 && lo.offdiag_zero_fraction > 0.0 && std::abs(gap_pa) <= 0.05,
          fmt("location_oracle %s (gap %.3f); prompt_agnostic gap %.3f", format_swap_summary(lo).c_str(), gap_lo,
              gap_pa)};
}

Outcome suppression() {
  test::TempDir out;
  Harness h(mock_config({"location_oracle"}, out.path()));
  const auto r = run_fragment_experiment(h, "location_oracle");
  return {r.case_ids.size() == 25 && r.suppression_rate == 1.0,
          fmt("irrelevant-prompt suppression %.3f over %zu cases", r.suppression_rate, r.case_ids.size())};
}

Outcome ladder_monotonicity() {
  test::TempDir out;
  Harness h(mock_config({"location_oracle"}, out.path()));
  const auto r = run_ladder_experiment(h, "location_oracle");
  const double l0 = r.rows[0].dsc.mean, l1 = r.rows[1].dsc.mean, l3 = r.rows[3].dsc.mean;
  return {r.case_ids.size() == 25 && l0 <= l1 && l1 <= l3, fmt("L0 %.3f, L1 %.3f, L3 %.3f", l0, l1, l3)};
}

Outcome benchmark_machinery() {
  test::TempDir out;
  auto cfg = mock_config({"noisy_oracle", "null_model"}, out.path());
  auto twin_a = builtin_endpoint("noisy_oracle");
  twin_a.model_id = "twin_a";
  auto twin_b = twin_a;
  twin_b.model_id = "twin_b";
  cfg.endpoints.push_back(twin_a);
  cfg.endpoints.push_back(twin_b);
  Harness h(cfg);
  const auto sig = run_benchmark(h, {"noisy_oracle", "null_model"});
  const auto same = run_benchmark(h, {"twin_a", "twin_b"});
  const double p_sig = sig.pairwise.at(0).p_adj;
  const double p_same = same.pairwise.at(0).p_adj;
  return {sig.case_ids.size() == 25 && p_sig < 0.05 && p_same == 1.0 && same.friedman.chi2 == 0.0,
          fmt("noisy vs null p_adj %.3g; identical p_adj %.3g, Friedman chi2 %.3g", p_sig, p_same,
              same.friedman.chi2)};
}

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

test::RunResult cli(const std::string& args, const fs::path& scratch, const std::string& env = "") {
  return test::run_command(env + PROBE_CLI + " " + args, scratch);
}

fs::path write_cli_config(const fs::path& dir, const fs::path& manifest) {
  const fs::path path = dir / "config.json";
  io::atomic_write(path, R"({"dataset_manifest": ")" + manifest.string() + R"(", "endpoints": [
      {"model_id": "location_oracle", "transport": "builtin", "mock": "location_oracle"},
      {"model_id": "noisy_oracle", "transport": "builtin", "mock": "noisy_oracle"},
      {"model_id": "null_model", "transport": "builtin", "mock": "null_model"}
    ], "alignment": {"cases": 0}, "seed": 42})");
  return path;
}

Outcome determinism() {
  test::TempDir work;
  bool ok = true;
  for (const char* d : {"gen_a", "gen_b"}) {
    ok &= cli("phantom-generate --n 25 --seed 42 --out " + quote(work / d), work.path()).exit_code == 0;
  }
  const bool phantoms_same = ok && test::snapshot_tree(work / "gen_a") == test::snapshot_tree(work / "gen_b");

  const auto cfg = write_cli_config(work.path(), work / "gen_a" / "manifest.json");
  const std::string env = "PROBE_CACHE_DIR=" + quote(work / "cache") + " ";
  for (const char* d : {"run_a", "run_b"}) {
    ok &= cli("alignment all --config " + quote(cfg) + " --model location_oracle --seed 42 --out " + quote(work / d),
              work.path(), env)
              .exit_code == 0;
  }
  const auto a = test::snapshot_tree(work / "run_a");
  const bool runs_same = ok && !a.empty() && a == test::snapshot_tree(work / "run_b");
  return {phantoms_same && runs_same, fmt("phantoms %s, alignment outputs %s (%zu files)",
                                          phantoms_same ? "identical" : "differ", runs_same ? "identical" : "differ",
                                          a.size())};
}

Outcome desk_suite() {
  test::TempDir work;
  const auto t0 = Clock::now();
  bool ok = cli("phantom-generate --n 25 --seed 42 --out " + quote(work / "data"), work.path()).exit_code == 0;
  const auto cfg = write_cli_config(work.path(), work / "data" / "manifest.json");
  ok = ok && cli("alignment all --config " + quote(cfg) + " --model location_oracle --out " + quote(work / "align"),
                 work.path())
                     .exit_code == 0;
  ok = ok && cli("benchmark --config " + quote(cfg) + " --out " + quote(work / "bench"), work.path()).exit_code == 0;
  const double elapsed = seconds_since(t0);
  ok = ok && fs::exists(work / "align" / "swap.json") && fs::exists(work / "bench" / "benchmark.json");
  return {ok && elapsed < 120.0, fmt("%s in %.2f s", ok ? "completed" : "failed", elapsed)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks = {
      {"dsc_oracle_equivalence", dsc_oracle},
      {"wilcoxon_exactness", wilcoxon_exactness},
      {"bh_correctness", bh_correctness},
      {"tail_accuracy", tail_accuracy},
      {"perturbation_asymmetry", perturbation_asymmetry},
      {"swap_conditioning", swap_conditioning},
      {"irrelevant_prompt_suppression", suppression},
      {"ladder_monotonicity", ladder_monotonicity},
      {"benchmark_significance", benchmark_machinery},
      {"determinism", determinism},
      {"desk_suite_runtime", desk_suite},
  };
  int failures = 0;
  for (const auto& [name, check] : checks) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << "\n" << std::flush;
  }
  return failures == 0 ? 0 : 1;
}
