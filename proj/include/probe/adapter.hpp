#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "probe/dataset.hpp"
#include "probe/errors.hpp"
#include "probe/phantom.hpp"
#include "probe/volume.hpp"

namespace probe::adapter {

inline constexpr int kProtocolVersion = 1;

struct SubprocessTransport {
  std::vector<std::string> argv;
};

struct HttpTransport {
  /// e.g. "http://127.0.0.1:8080"
  std::string base_url;
};

struct BuiltinTransport {
  phantom::MockKind mock;
  std::uint64_t seed = 0;
};

using TransportSpec = std::variant<SubprocessTransport, HttpTransport, BuiltinTransport>;

struct AdapterEndpoint {
  std::string model_id;
  TransportSpec transport;
  std::size_t max_inflight = 1;
  double timeout_seconds = 60.0;
  /// Extra attempts after a failed invocation.
  int retries = 1;
  /// Report label, e.g. "Fine-tuned", "ZS-Vision", "ZS-VLM".
  std::string category;
  /// Text-conditioned model; vision-only models are sent an empty prompt.
  bool prompted = true;
  /// Model this endpoint is a prompt variant of; the benchmark keeps the
  /// variant with the best mean DSC per model. Empty means its own model.
  std::string variant_of;
};

struct AdapterInfo {
  std::string name;
  std::string version;
  int protocol_version = 0;
};

// Transport failures.
class TransportError : public Error {
 public:
  using Error::Error;
};
class TimeoutError : public TransportError {
 public:
  using TransportError::TransportError;
};
/// Malformed or unexpected response line.
class ProtocolError : public TransportError {
 public:
  using TransportError::TransportError;
};
/// The adapter answered {"status":"error"}.
class AdapterReportedError : public TransportError {
 public:
  using TransportError::TransportError;
};
/// Adapter process could not be started or exited.
class SpawnError : public TransportError {
 public:
  using TransportError::TransportError;
};
class UnreachableError : public TransportError {
 public:
  using TransportError::TransportError;
};
class UnsupportedProtocolError : public TransportError {
 public:
  using TransportError::TransportError;
};
/// Returned mask grid differs from the case image grid.
class MaskShapeError : public ShapeError {
 public:
  using ShapeError::ShapeError;
};

struct SegmentReply {
  enum class Status { ok, zero };
  Status status = Status::ok;
  std::filesystem::path mask;
};

/// One model behind the wire protocol. Implementations must be safe to call
/// from several threads at once.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual AdapterInfo hello() = 0;
  /// Asks the adapter to segment `c` with `prompt`, writing the mask at `out`.
  /// Throws TransportError subclasses on failure.
  virtual SegmentReply segment(const CaseRef& c, std::string_view prompt, const std::filesystem::path& out) = 0;
};

std::unique_ptr<Transport> make_transport(const AdapterEndpoint& endpoint);

/// Validates a hello/segment response line and converts error statuses to exceptions.
AdapterInfo parse_hello_response(std::string_view line);
SegmentReply parse_segment_response(std::string_view line);
/// {"op":"segment","case_id":...,"image":...,"prompt":...,"out":...}
std::string segment_request_json(const CaseRef& c, std::string_view prompt, const std::filesystem::path& out);

struct PredictionRecord {
  std::string case_id;
  std::string model_id;
  /// Normalized prompt.
  std::string prompt_text;
  std::filesystem::path mask_path;
  bool zero_mask = false;
  std::string cache_key;
  double latency_seconds = 0.0;
  /// Set when the invocation failed and the prediction was scored as empty.
  std::optional<std::string> error;
  bool from_cache = false;
};

nlohmann::ordered_json to_json(const PredictionRecord& r);
PredictionRecord record_from_json(const nlohmann::json& j);

/// SHA-256 hex of model_id \x1f case_id \x1f normalize_prompt(prompt).
std::string cache_key(std::string_view model_id, std::string_view case_id, std::string_view prompt);

/// Cached, concurrency-limited access to one endpoint.
class ModelClient {
 public:
  ModelClient(AdapterEndpoint endpoint, std::filesystem::path cache_dir);
  ModelClient(AdapterEndpoint endpoint, std::filesystem::path cache_dir, std::unique_ptr<Transport> transport);

  ModelClient(const ModelClient&) = delete;
  ModelClient& operator=(const ModelClient&) = delete;

  /// Hello round trip; requires protocol version 1. The result is memoized.
  AdapterInfo handshake();

  /// Cached prediction. On a miss, invokes the transport (with retries),
  /// stores the mask plus a sidecar record under the cache key, and returns
  /// the record. Throws on failure after retries.
  PredictionRecord segment(const CaseRef& c, std::string_view prompt);

  /// Like segment(), but failures become a zero-mask record carrying the
  /// error message. Failures are not cached.
  PredictionRecord segment_or_failure(const CaseRef& c, std::string_view prompt);

  /// Uncached single invocation, returning the mask. Throws MaskShapeError
  /// when the mask grid differs from the case image.
  MaskVolume invoke(const CaseRef& c, std::string_view prompt);

  const AdapterEndpoint& endpoint() const { return endpoint_; }
  const std::filesystem::path& cache_dir() const { return cache_dir_; }
  /// Transport invocations issued so far (cache hits excluded).
  std::uint64_t invocations() const { return invocations_.load(); }

 private:
  MaskVolume invoke_once(const CaseRef& c, std::string_view prompt, const std::filesystem::path& out);
  const Dims& image_dims(const CaseRef& c, Spacing* spacing);

  AdapterEndpoint endpoint_;
  std::filesystem::path cache_dir_;
  std::unique_ptr<Transport> transport_;
  std::counting_semaphore<> inflight_;
  std::atomic<std::uint64_t> invocations_{0};
  std::atomic<std::uint64_t> scratch_counter_{0};
  std::mutex mutex_;
  std::optional<AdapterInfo> info_;
  std::map<std::string, std::pair<Dims, Spacing>> dims_;
};

AdapterInfo handshake(const AdapterEndpoint& endpoint);

/// One-shot convenience over ModelClient.
PredictionRecord segment(const AdapterEndpoint& endpoint, const CaseRef& c, std::string_view prompt,
                         const std::filesystem::path& cache_dir);

struct ConformanceFixture {
  CaseRef case_ref;
  std::string prompt;
  std::optional<std::filesystem::path> expected_mask;
  double min_dice = 1.0;
};

struct FixtureResult {
  std::string case_id;
  bool shape_ok = false;
  bool deterministic = false;
  std::optional<double> dice;
  bool pass = false;
  std::string message;
};

struct ConformanceReport {
  std::string model_id;
  bool handshake_ok = false;
  AdapterInfo info;
  std::string handshake_error;
  std::vector<FixtureResult> fixtures;

  std::size_t passed() const;
  bool all_passed() const { return handshake_ok && passed() == fixtures.size(); }
};

/// Handshake, then two uncached invocations per fixture: checks the mask grid,
/// that the two masks are identical, and Dice against the expected mask.
ConformanceReport conformance_check(ModelClient& client, std::span<const ConformanceFixture> fixtures);

nlohmann::ordered_json to_json(const ConformanceReport& r);

}  // namespace probe::adapter
