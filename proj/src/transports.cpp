#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <thread>

#include "httplib.h"
#include "probe/adapter.hpp"

namespace probe::adapter {

namespace fs = std::filesystem;

namespace {

std::string describe_status(int status) {
  if (WIFEXITED(status)) return "exit status " + std::to_string(WEXITSTATUS(status));
  if (WIFSIGNALED(status)) return "killed by signal " + std::to_string(WTERMSIG(status));
  return "status " + std::to_string(status);
}

/// A child process speaking one JSON line per request on stdin/stdout.
class ChildProcess {
 public:
  explicit ChildProcess(const std::vector<std::string>& argv) {
    if (argv.empty()) throw SpawnError("subprocess adapter: empty command line");
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);

    int to_child[2];
    int from_child[2];
    if (::pipe2(to_child, O_CLOEXEC) != 0) throw SpawnError(std::string("pipe: ") + std::strerror(errno));
    if (::pipe2(from_child, O_CLOEXEC) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw SpawnError(std::string("pipe: ") + std::strerror(errno));
    }
    pid_ = ::fork();
    if (pid_ < 0) {
      for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) ::close(fd);
      throw SpawnError(std::string("fork: ") + std::strerror(errno));
    }
    if (pid_ == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::execvp(args[0], args.data());
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    in_fd_ = to_child[1];
    out_fd_ = from_child[0];
  }

  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  ~ChildProcess() {
    if (in_fd_ >= 0) ::close(in_fd_);
    if (out_fd_ >= 0) ::close(out_fd_);
    if (pid_ > 0 && !reaped_) {
      // Closing stdin asks the adapter to exit; give it a moment.
      int status = 0;
      for (int i = 0; i < 40; ++i) {
        if (::waitpid(pid_, &status, WNOHANG) == pid_) return;
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
      }
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, &status, 0);
    }
  }

  void write_line(std::string_view line) {
    std::string data(line);
    data.push_back('\n');
    std::size_t off = 0;
    while (off < data.size()) {
      const ssize_t n = ::write(in_fd_, data.data() + off, data.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw SpawnError("adapter process closed its input (" + reap() + ")");
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::string read_line(double timeout_seconds) {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_seconds);
    for (;;) {
      if (auto nl = buf_.find('\n'); nl != std::string::npos) {
        std::string line = buf_.substr(0, nl);
        buf_.erase(0, nl + 1);
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw TimeoutError("adapter did not answer within " + std::to_string(timeout_seconds) + " s");
      pollfd pfd{out_fd_, POLLIN, 0};
      const int rc = ::poll(&pfd, 1, static_cast<int>(left.count()));
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw SpawnError(std::string("poll: ") + std::strerror(errno));
      }
      if (rc == 0) continue;
      char chunk[4096];
      const ssize_t n = ::read(out_fd_, chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw SpawnError(std::string("read: ") + std::strerror(errno));
      }
      if (n == 0) throw SpawnError("adapter process exited (" + reap() + ")");
      buf_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  std::string reap() {
    if (reaped_) return describe_status(status_);
    if (::waitpid(pid_, &status_, 0) == pid_) {
      reaped_ = true;
      return describe_status(status_);
    }
    return "unknown status";
  }

  pid_t pid_ = -1;
  int in_fd_ = -1;
  int out_fd_ = -1;
  int status_ = 0;
  bool reaped_ = false;
  std::string buf_;
};

const std::string kHelloRequest = R"({"op":"hello"})";

class SubprocessAdapter final : public Transport {
 public:
  SubprocessAdapter(std::vector<std::string> argv, double timeout) : argv_(std::move(argv)), timeout_(timeout) {
    ::signal(SIGPIPE, SIG_IGN);
  }

  AdapterInfo hello() override {
    auto worker = acquire();
    AdapterInfo info;
    try {
      worker->write_line(kHelloRequest);
      info = parse_hello_response(worker->read_line(timeout_));
    } catch (const AdapterReportedError&) {
      release(std::move(worker));
      throw;
    }
    release(std::move(worker));
    return info;
  }

  SegmentReply segment(const CaseRef& c, std::string_view prompt, const fs::path& out) override {
    auto worker = acquire();
    SegmentReply reply;
    try {
      worker->write_line(segment_request_json(c, prompt, out));
      reply = parse_segment_response(worker->read_line(timeout_));
    } catch (const AdapterReportedError&) {
      release(std::move(worker));
      throw;
    }
    // Any other exception drops the worker; a fresh one is spawned next time.
    release(std::move(worker));
    return reply;
  }

 private:
  std::unique_ptr<ChildProcess> acquire() {
    {
      std::lock_guard lock(mutex_);
      if (!idle_.empty()) {
        auto w = std::move(idle_.back());
        idle_.pop_back();
        return w;
      }
    }
    auto w = std::make_unique<ChildProcess>(argv_);
    w->write_line(kHelloRequest);
    const AdapterInfo info = parse_hello_response(w->read_line(timeout_));
    if (info.protocol_version != kProtocolVersion) {
      throw UnsupportedProtocolError("adapter speaks protocol " + std::to_string(info.protocol_version) +
                                     ", harness requires " + std::to_string(kProtocolVersion));
    }
    return w;
  }

  void release(std::unique_ptr<ChildProcess> w) {
    std::lock_guard lock(mutex_);
    idle_.push_back(std::move(w));
  }

  std::vector<std::string> argv_;
  double timeout_;
  std::mutex mutex_;
  std::vector<std::unique_ptr<ChildProcess>> idle_;
};

class HttpAdapter final : public Transport {
 public:
  HttpAdapter(std::string base_url, double timeout) : base_url_(std::move(base_url)), timeout_(timeout) {}

  AdapterInfo hello() override {
    auto cli = client();
    auto res = cli.Get("/v1/hello");
    if (!res) throw UnreachableError("GET " + base_url_ + "/v1/hello failed: " + httplib::to_string(res.error()));
    return parse_hello_response(trim_newline(res->body));
  }

  SegmentReply segment(const CaseRef& c, std::string_view prompt, const fs::path& out) override {
    auto cli = client();
    auto res = cli.Post("/v1/segment", segment_request_json(c, prompt, out), "application/json");
    if (!res) {
      if (res.error() == httplib::Error::Read) throw TimeoutError("POST " + base_url_ + "/v1/segment: read failed or timed out");
      throw UnreachableError("POST " + base_url_ + "/v1/segment failed: " + httplib::to_string(res.error()));
    }
    return parse_segment_response(trim_newline(res->body));
  }

 private:
  static std::string_view trim_newline(std::string_view s) {
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.remove_suffix(1);
    return s;
  }

  httplib::Client client() const {
    httplib::Client cli(base_url_);
    const auto secs = static_cast<time_t>(timeout_);
    const auto usecs = static_cast<time_t>((timeout_ - static_cast<double>(secs)) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    return cli;
  }

  std::string base_url_;
  double timeout_;
};

class BuiltinAdapter final : public Transport {
 public:
  explicit BuiltinAdapter(BuiltinTransport spec) : spec_(spec) {}

  AdapterInfo hello() override {
    return {"builtin:" + std::string(phantom::to_string(spec_.mock.type)), "1", kProtocolVersion};
  }

  SegmentReply segment(const CaseRef& c, std::string_view prompt, const fs::path& out) override {
    const auto data = load(c);
    MaskVolume mask = phantom::mock_segment(spec_.mock, data->image, data->truth, c.attributes, prompt, spec_.seed);
    if (is_zero_mask(mask)) return {SegmentReply::Status::zero, {}};
    write_volume(mask, out);
    return {SegmentReply::Status::ok, out};
  }

 private:
  struct CaseData {
    ImageVolume image;
    MaskVolume truth;
  };

  std::shared_ptr<const CaseData> load(const CaseRef& c) {
    {
      std::lock_guard lock(mutex_);
      if (auto it = cases_.find(c.case_id); it != cases_.end()) return it->second;
    }
    auto data = std::make_shared<const CaseData>(CaseData{read_image(c.image), read_mask(c.gtv)});
    std::lock_guard lock(mutex_);
    return cases_.emplace(c.case_id, std::move(data)).first->second;
  }

  BuiltinTransport spec_;
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const CaseData>> cases_;
};

}  // namespace

std::unique_ptr<Transport> make_transport(const AdapterEndpoint& endpoint) {
  return std::visit(
      [&](const auto& t) -> std::unique_ptr<Transport> {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, SubprocessTransport>) {
          return std::make_unique<SubprocessAdapter>(t.argv, endpoint.timeout_seconds);
        } else if constexpr (std::is_same_v<T, HttpTransport>) {
          return std::make_unique<HttpAdapter>(t.base_url, endpoint.timeout_seconds);
        } else {
          return std::make_unique<BuiltinAdapter>(t);
        }
      },
      endpoint.transport);
}

}  // namespace probe::adapter
