#include "probe/adapter.hpp"

#include <unistd.h>

#include <chrono>

#include "probe/io.hpp"
#include "probe/promptgen.hpp"

namespace probe::adapter {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json parse_response_object(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception&) {
    throw ProtocolError("malformed response line: " + std::string(line.substr(0, 200)));
  }
  if (!j.is_object() || !j.contains("status") || !j.at("status").is_string()) {
    throw ProtocolError("response lacks a string \"status\": " + std::string(line.substr(0, 200)));
  }
  if (j.at("status") == "error") {
    const auto it = j.find("message");
    throw AdapterReportedError(it != j.end() && it->is_string() ? it->get<std::string>() : "adapter error");
  }
  return j;
}

class SemaphoreGuard {
 public:
  explicit SemaphoreGuard(std::counting_semaphore<>& s) : s_(s) { s_.acquire(); }
  ~SemaphoreGuard() { s_.release(); }
  SemaphoreGuard(const SemaphoreGuard&) = delete;
  SemaphoreGuard& operator=(const SemaphoreGuard&) = delete;

 private:
  std::counting_semaphore<>& s_;
};

}  // namespace

AdapterInfo parse_hello_response(std::string_view line) {
  const json j = parse_response_object(line);
  if (j.at("status") != "ok") throw ProtocolError("unexpected hello status " + j.at("status").dump());
  AdapterInfo info;
  try {
    info.name = j.at("name").get<std::string>();
    info.version = j.at("version").get<std::string>();
    info.protocol_version = j.at("protocol").get<int>();
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("hello response: ") + e.what());
  }
  return info;
}

SegmentReply parse_segment_response(std::string_view line) {
  const json j = parse_response_object(line);
  const auto status = j.at("status").get<std::string>();
  if (status == "zero") return {SegmentReply::Status::zero, {}};
  if (status != "ok") throw ProtocolError("unexpected segment status \"" + status + "\"");
  const auto it = j.find("mask");
  if (it == j.end() || !it->is_string()) throw ProtocolError("segment response \"ok\" without a mask path");
  return {SegmentReply::Status::ok, fs::path(it->get<std::string>())};
}

std::string segment_request_json(const CaseRef& c, std::string_view prompt, const fs::path& out) {
  nlohmann::ordered_json j;
  j["op"] = "segment";
  j["case_id"] = c.case_id;
  j["image"] = c.image.string();
  j["prompt"] = prompt;
  j["out"] = out.string();
  return j.dump();
}

nlohmann::ordered_json to_json(const PredictionRecord& r) {
  nlohmann::ordered_json j;
  j["case_id"] = r.case_id;
  j["model_id"] = r.model_id;
  j["prompt_text"] = r.prompt_text;
  j["mask_path"] = r.mask_path.generic_string();
  j["zero_mask"] = r.zero_mask;
  j["cache_key"] = r.cache_key;
  j["latency_seconds"] = r.latency_seconds;
  if (r.error) j["error"] = *r.error;
  return j;
}

PredictionRecord record_from_json(const json& j) {
  PredictionRecord r;
  r.case_id = j.at("case_id").get<std::string>();
  r.model_id = j.at("model_id").get<std::string>();
  r.prompt_text = j.at("prompt_text").get<std::string>();
  r.mask_path = j.at("mask_path").get<std::string>();
  r.zero_mask = j.at("zero_mask").get<bool>();
  r.cache_key = j.at("cache_key").get<std::string>();
  r.latency_seconds = j.value("latency_seconds", 0.0);
  if (j.contains("error")) r.error = j.at("error").get<std::string>();
  return r;
}

std::string cache_key(std::string_view model_id, std::string_view case_id, std::string_view prompt) {
  std::string material;
  material.append(model_id);
  material.push_back('\x1f');
  material.append(case_id);
  material.push_back('\x1f');
  material.append(normalize_prompt(prompt));
  return io::sha256_hex(material);
}

ModelClient::ModelClient(AdapterEndpoint endpoint, fs::path cache_dir)
    : ModelClient(endpoint, std::move(cache_dir), make_transport(endpoint)) {}

ModelClient::ModelClient(AdapterEndpoint endpoint, fs::path cache_dir, std::unique_ptr<Transport> transport)
    : endpoint_(std::move(endpoint)),
      cache_dir_(std::move(cache_dir)),
      transport_(std::move(transport)),
      inflight_(static_cast<std::ptrdiff_t>(endpoint_.max_inflight)) {
  if (endpoint_.model_id.empty()) throw ConfigError("endpoint model_id must be nonempty");
  if (endpoint_.max_inflight < 1) throw ConfigError("endpoint " + endpoint_.model_id + ": max_inflight must be >= 1");
}

AdapterInfo ModelClient::handshake() {
  {
    std::lock_guard lock(mutex_);
    if (info_) return *info_;
  }
  AdapterInfo info;
  {
    SemaphoreGuard slot(inflight_);
    info = transport_->hello();
  }
  if (info.protocol_version != kProtocolVersion) {
    throw UnsupportedProtocolError("adapter " + endpoint_.model_id + " speaks protocol " +
                                   std::to_string(info.protocol_version) + ", harness requires " +
                                   std::to_string(kProtocolVersion));
  }
  std::lock_guard lock(mutex_);
  info_ = info;
  return info;
}

const Dims& ModelClient::image_dims(const CaseRef& c, Spacing* spacing) {
  {
    std::lock_guard lock(mutex_);
    if (auto it = dims_.find(c.case_id); it != dims_.end()) {
      *spacing = it->second.second;
      return it->second.first;
    }
  }
  const ImageVolume img = read_image(c.image);
  std::lock_guard lock(mutex_);
  auto& entry = dims_.emplace(c.case_id, std::make_pair(img.dims(), img.spacing())).first->second;
  *spacing = entry.second;
  return entry.first;
}

MaskVolume ModelClient::invoke_once(const CaseRef& c, std::string_view prompt, const fs::path& out) {
  Spacing spacing;
  const Dims dims = image_dims(c, &spacing);
  SegmentReply reply;
  {
    SemaphoreGuard slot(inflight_);
    invocations_.fetch_add(1);
    reply = transport_->segment(c, normalize_prompt(prompt), out);
  }
  if (reply.status == SegmentReply::Status::zero) return MaskVolume(dims, spacing);
  MaskVolume mask = read_mask(reply.mask);
  std::error_code ec;
  fs::remove(reply.mask, ec);
  if (mask.dims() != dims) {
    throw MaskShapeError("adapter " + endpoint_.model_id + " returned mask dims " + mask.dims().str() +
                         " for case " + c.case_id + " with image dims " + dims.str());
  }
  return mask;
}

MaskVolume ModelClient::invoke(const CaseRef& c, std::string_view prompt) {
  const fs::path scratch = cache_dir_ / "scratch" /
                           ("inv-" + std::to_string(::getpid()) + "-" + std::to_string(scratch_counter_.fetch_add(1)) + ".pvol");
  fs::create_directories(scratch.parent_path());
  return invoke_once(c, prompt, scratch);
}

PredictionRecord ModelClient::segment(const CaseRef& c, std::string_view prompt) {
  PredictionRecord rec;
  rec.case_id = c.case_id;
  rec.model_id = endpoint_.model_id;
  rec.prompt_text = normalize_prompt(prompt);
  rec.cache_key = cache_key(rec.model_id, rec.case_id, rec.prompt_text);

  const fs::path dir = cache_dir_ / rec.cache_key.substr(0, 2);
  const fs::path sidecar = dir / (rec.cache_key + ".json");
  const fs::path mask_rel = fs::path(rec.cache_key.substr(0, 2)) / (rec.cache_key + ".pvol");

  if (fs::exists(sidecar)) {
    try {
      PredictionRecord cached = record_from_json(json::parse(io::read_file(sidecar)));
      if (cached.cache_key == rec.cache_key && fs::exists(cache_dir_ / cached.mask_path)) {
        cached.mask_path = cache_dir_ / cached.mask_path;
        cached.from_cache = true;
        return cached;
      }
    } catch (const std::exception&) {
      // Unreadable sidecar: fall through and recompute.
    }
  }

  const int attempts = 1 + std::max(0, endpoint_.retries);
  for (int attempt = 1;; ++attempt) {
    try {
      const auto t0 = std::chrono::steady_clock::now();
      const MaskVolume mask = invoke(c, rec.prompt_text);
      rec.latency_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      rec.zero_mask = is_zero_mask(mask);
      write_volume(mask, cache_dir_ / mask_rel);
      rec.mask_path = mask_rel;
      io::atomic_write(sidecar, to_json(rec).dump(2) + "\n");
      rec.mask_path = cache_dir_ / mask_rel;
      return rec;
    } catch (const std::exception&) {
      if (attempt >= attempts) throw;
    }
  }
}

PredictionRecord ModelClient::segment_or_failure(const CaseRef& c, std::string_view prompt) {
  try {
    return segment(c, prompt);
  } catch (const std::exception& e) {
    PredictionRecord rec;
    rec.case_id = c.case_id;
    rec.model_id = endpoint_.model_id;
    rec.prompt_text = normalize_prompt(prompt);
    rec.cache_key = cache_key(rec.model_id, rec.case_id, rec.prompt_text);
    rec.zero_mask = true;
    rec.error = e.what();
    return rec;
  }
}

AdapterInfo handshake(const AdapterEndpoint& endpoint) {
  auto transport = make_transport(endpoint);
  const AdapterInfo info = transport->hello();
  if (info.protocol_version != kProtocolVersion) {
    throw UnsupportedProtocolError("adapter " + endpoint.model_id + " speaks protocol " +
                                   std::to_string(info.protocol_version) + ", harness requires " +
                                   std::to_string(kProtocolVersion));
  }
  return info;
}

PredictionRecord segment(const AdapterEndpoint& endpoint, const CaseRef& c, std::string_view prompt,
                         const fs::path& cache_dir) {
  ModelClient client(endpoint, cache_dir);
  return client.segment(c, prompt);
}

std::size_t ConformanceReport::passed() const {
  std::size_t n = 0;
  for (const auto& f : fixtures) n += f.pass ? 1 : 0;
  return n;
}

ConformanceReport conformance_check(ModelClient& client, std::span<const ConformanceFixture> fixtures) {
  ConformanceReport report;
  report.model_id = client.endpoint().model_id;
  try {
    report.info = client.handshake();
    report.handshake_ok = true;
  } catch (const std::exception& e) {
    report.handshake_error = e.what();
  }

  for (const auto& fx : fixtures) {
    FixtureResult r;
    r.case_id = fx.case_ref.case_id;
    if (!report.handshake_ok) {
      r.message = "handshake failed: " + report.handshake_error;
      report.fixtures.push_back(std::move(r));
      continue;
    }
    try {
      const MaskVolume first = client.invoke(fx.case_ref, fx.prompt);
      r.shape_ok = true;
      const MaskVolume second = client.invoke(fx.case_ref, fx.prompt);
      r.deterministic = first == second;
      if (!r.deterministic) r.message = "masks differ across repeated calls";
      bool dice_ok = true;
      if (fx.expected_mask) {
        r.dice = dice(first, read_mask(*fx.expected_mask)).value;
        dice_ok = *r.dice >= fx.min_dice;
        if (!dice_ok && r.message.empty()) r.message = "dice below expected minimum";
      }
      r.pass = r.deterministic && dice_ok;
    } catch (const MaskShapeError& e) {
      r.shape_ok = false;
      r.message = e.what();
    } catch (const std::exception& e) {
      r.message = e.what();
    }
    report.fixtures.push_back(std::move(r));
  }
  return report;
}

nlohmann::ordered_json to_json(const ConformanceReport& r) {
  nlohmann::ordered_json j;
  j["model_id"] = r.model_id;
  j["handshake_ok"] = r.handshake_ok;
  j["adapter"] = {{"name", r.info.name}, {"version", r.info.version}, {"protocol", r.info.protocol_version}};
  if (!r.handshake_error.empty()) j["handshake_error"] = r.handshake_error;
  j["passed"] = r.passed();
  j["total"] = r.fixtures.size();
  auto& rows = j["fixtures"] = nlohmann::ordered_json::array();
  for (const auto& f : r.fixtures) {
    nlohmann::ordered_json row;
    row["case_id"] = f.case_id;
    row["shape_ok"] = f.shape_ok;
    row["deterministic"] = f.deterministic;
    row["dice"] = f.dice ? nlohmann::ordered_json(*f.dice) : nlohmann::ordered_json(nullptr);
    row["pass"] = f.pass;
    row["message"] = f.message;
    rows.push_back(std::move(row));
  }
  return j;
}

}  // namespace probe::adapter
