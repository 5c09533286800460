// probe-mock-adapter: subprocess-protocol adapter serving the built-in mocks,
// with switches that make it misbehave for conformance and transport tests.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "probe/dataset.hpp"
#include "probe/phantom.hpp"
#include "probe/volume.hpp"

using namespace probe;
using nlohmann::json;

namespace {

void reply(const json& j) {
  std::cout << j.dump() << "\n" << std::flush;
}

void reply_error(const std::string& message) { reply({{"status", "error"}, {"message", message}}); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mock segmentation adapter speaking the line protocol", "probe-mock-adapter"};
  std::string manifest_path;
  std::string mock = "location_oracle";
  std::uint64_t seed = 0;
  phantom::MockKind kind;
  int protocol = 1;
  bool wrong_shape = false;
  bool nondeterministic = false;
  std::string fail_case;
  bool garbage = false;
  int sleep_ms = 0;
  bool exit_immediately = false;
  app.add_option("--manifest", manifest_path, "Dataset manifest (ground truth lookup)")->required();
  app.add_option("--mock", mock, "Mock kind");
  app.add_option("--seed", seed, "Mock seed");
  app.add_option("--noise", kind.noise, "location_oracle dropout");
  app.add_option("--radius", kind.radius, "noisy_oracle radius");
  app.add_flag("--erode", kind.erode, "noisy_oracle erodes instead of dilating");
  app.add_option("--protocol", protocol, "Protocol version announced by hello");
  app.add_flag("--wrong-shape", wrong_shape, "Return masks one voxel wider than the image");
  app.add_flag("--nondeterministic", nondeterministic, "Flip a voxel on every other call");
  app.add_option("--fail-case", fail_case, "Reply with an error for this case id");
  app.add_flag("--garbage", garbage, "Reply to segment requests with a non-JSON line");
  app.add_option("--sleep-ms", sleep_ms, "Delay before each segment reply");
  app.add_flag("--exit-immediately", exit_immediately, "Exit with status 3 before reading anything");
  CLI11_PARSE(app, argc, argv);

  if (exit_immediately) return 3;

  std::map<std::string, CaseRef> cases;
  try {
    kind.type = phantom::parse_mock_type(mock);
    for (auto& c : load_manifest(manifest_path)) cases.emplace(c.case_id, std::move(c));
  } catch (const std::exception& e) {
    std::cerr << "probe-mock-adapter: " << e.what() << "\n";
    return 2;
  }

  std::uint64_t calls = 0;
  std::string line;
  while (std::getline(std::cin, line)) {
    json req;
    try {
      req = json::parse(line);
    } catch (const json::exception&) {
      reply_error("malformed request");
      continue;
    }
    const std::string op = req.value("op", "");
    if (op == "hello") {
      reply({{"status", "ok"}, {"name", "probe-mock-adapter:" + mock}, {"version", "1.0"}, {"protocol", protocol}});
      continue;
    }
    if (op != "segment") {
      reply_error("unknown op \"" + op + "\"");
      continue;
    }
    if (sleep_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(sleep_ms));
    if (garbage) {
      std::cout << "this is not json\n" << std::flush;
      continue;
    }
    try {
      const std::string case_id = req.at("case_id").get<std::string>();
      if (case_id == fail_case) {
        reply_error("configured failure for " + case_id);
        continue;
      }
      auto it = cases.find(case_id);
      if (it == cases.end()) {
        reply_error("unknown case " + case_id);
        continue;
      }
      const ImageVolume image = read_image(req.at("image").get<std::string>());
      const MaskVolume truth = read_mask(it->second.gtv);
      MaskVolume mask =
          phantom::mock_segment(kind, image, truth, it->second.attributes, req.at("prompt").get<std::string>(), seed);
      ++calls;
      if (nondeterministic && calls % 2 == 0) mask.set(0, 0, 0, !mask.at(0, 0, 0));
      if (wrong_shape) {
        const Dims d = mask.dims();
        MaskVolume wide(Dims{d.nx + 1, d.ny, d.nz}, mask.spacing());
        for (std::int64_t z = 0; z < d.nz; ++z)
          for (std::int64_t y = 0; y < d.ny; ++y)
            for (std::int64_t x = 0; x < d.nx; ++x) wide.set(x, y, z, mask.at(x, y, z));
        mask = std::move(wide);
      } else if (is_zero_mask(mask) && !nondeterministic) {
        reply({{"status", "zero"}});
        continue;
      }
      const std::string out = req.at("out").get<std::string>();
      write_volume(mask, out);
      reply({{"status", "ok"}, {"mask", out}});
    } catch (const std::exception& e) {
      reply_error(e.what());
    }
  }
  return 0;
}
