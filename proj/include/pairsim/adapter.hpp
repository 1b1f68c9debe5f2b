/*
 * Copyright 2026 The pairsim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Client side of the TTS/ASR adapter protocol.
//
// An adapter is a child process speaking one JSON object per line over its
// standard streams:
//
//   -> {"type":"hello","role":"tts"|"asr","version":1}   <- {"type":"ready"}
//   -> {"type":"synth","id":N,"text":...}
//   <- {"type":"audio","id":N,"sample_rate":16000,"pcm16_b64":...}
//   -> {"type":"transcribe","id":N,"sample_rate":...,"pcm16_b64":...}
//   <- {"type":"transcript","id":N,"text":...}
//   <- {"type":"error","id":N,"message":...}
//
// Each child has at most one request in flight; AdapterPool spreads work
// over several children.

#ifndef PAIRSIM_ADAPTER_HPP_
#define PAIRSIM_ADAPTER_HPP_

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <boost/beast/core/detail/base64.hpp>
#include <nlohmann/json.hpp>

#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pairsim/audio.hpp"
#include "pairsim/common.hpp"

namespace pairsim {

inline constexpr int kAdapterProtocolVersion = 1;

enum class AdapterRole { kTts, kAsr };

inline std::string to_string(AdapterRole r) { return r == AdapterRole::kTts ? "tts" : "asr"; }

class TransportError : public Error {
 public:
  enum class Kind { kTimeout, kProtocol, kExited, kRemote, kSpawn };

  TransportError(Kind kind, std::uint64_t request_id, const std::string& what)
      : Error("adapter " + kind_name(kind) + " (request " + std::to_string(request_id) + "): " + what),
        kind_(kind),
        request_id_(request_id) {}

  Kind kind() const noexcept { return kind_; }
  std::uint64_t request_id() const noexcept { return request_id_; }

  static std::string kind_name(Kind k) {
    switch (k) {
      case Kind::kTimeout: return "timeout";
      case Kind::kProtocol: return "protocol error";
      case Kind::kExited: return "exited";
      case Kind::kRemote: return "error";
      case Kind::kSpawn: return "spawn failure";
    }
    return "failure";
  }

 private:
  Kind kind_;
  std::uint64_t request_id_;
};

namespace detail {

inline void ignore_sigpipe_once() {
  static std::once_flag flag;
  std::call_once(flag, [] { ::signal(SIGPIPE, SIG_IGN); });
}

inline std::string base64_encode(const std::string& raw) {
  namespace b64 = boost::beast::detail::base64;
  std::string out(b64::encoded_size(raw.size()), '\0');
  out.resize(b64::encode(out.data(), raw.data(), raw.size()));
  return out;
}

inline std::string base64_decode(const std::string& text) {
  namespace b64 = boost::beast::detail::base64;
  // Padded form only; the decoder stops at the first '='.
  std::size_t body = text.size();
  while (body > 0 && text.size() - body < 2 && text[body - 1] == '=') --body;
  if (text.size() % 4 != 0) throw InvalidArgument("invalid base64 payload");
  std::string out(b64::decoded_size(text.size()), '\0');
  auto [written, read] = b64::decode(out.data(), text.data(), body);
  if (read != body) throw InvalidArgument("invalid base64 payload");
  out.resize(written);
  return out;
}

}  // namespace detail

inline std::string pcm16_base64(const AudioBuffer& a) {
  const auto pcm = to_pcm16(a.samples);
  std::string raw;
  raw.reserve(pcm.size() * 2);
  for (auto v : pcm) {
    const auto u = static_cast<std::uint16_t>(v);
    raw.push_back(static_cast<char>(u & 0xff));
    raw.push_back(static_cast<char>(u >> 8));
  }
  return detail::base64_encode(raw);
}

inline AudioBuffer audio_from_pcm16_base64(const std::string& b64, int sample_rate) {
  const std::string raw = detail::base64_decode(b64);
  if (raw.size() % 2) throw InvalidArgument("odd PCM16 byte count");
  std::vector<std::int16_t> pcm(raw.size() / 2);
  for (std::size_t i = 0; i < pcm.size(); ++i)
    pcm[i] = static_cast<std::int16_t>(static_cast<std::uint8_t>(raw[2 * i]) |
                                       (static_cast<std::uint8_t>(raw[2 * i + 1]) << 8));
  return {from_pcm16(pcm), sample_rate};
}

// A spawned child with line-oriented pipes to its stdin/stdout.
class ChildProcess {
 public:
  explicit ChildProcess(const std::vector<std::string>& argv) {
    if (argv.empty()) throw TransportError(TransportError::Kind::kSpawn, 0, "empty command");
    detail::ignore_sigpipe_once();
    int to_child[2], from_child[2];
    if (::pipe2(to_child, O_CLOEXEC) != 0 || ::pipe2(from_child, O_CLOEXEC) != 0)
      throw TransportError(TransportError::Kind::kSpawn, 0, "pipe() failed");
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    pid_ = ::fork();
    if (pid_ < 0) throw TransportError(TransportError::Kind::kSpawn, 0, "fork() failed");
    if (pid_ == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::execvp(args[0], args.data());
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    in_ = to_child[1];
    out_ = from_child[0];
  }
  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;
  ~ChildProcess() { terminate(); }

  pid_t pid() const noexcept { return pid_; }

  bool write_line(const std::string& line) {
    std::string buf = line + "\n";
    std::size_t off = 0;
    while (off < buf.size()) {
      const auto n = ::write(in_, buf.data() + off, buf.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        return false;
      }
      off += static_cast<std::size_t>(n);
    }
    return true;
  }

  // nullopt on timeout; throws kExited on EOF.
  std::optional<std::string> read_line(std::chrono::milliseconds timeout, std::uint64_t id) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) return std::nullopt;
      pollfd pfd{out_, POLLIN, 0};
      const int rc = ::poll(&pfd, 1, static_cast<int>(left.count()));
      if (rc < 0 && errno == EINTR) continue;
      if (rc == 0) return std::nullopt;
      char chunk[65536];
      const auto n = ::read(out_, chunk, sizeof(chunk));
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw TransportError(TransportError::Kind::kExited, id, "adapter closed its output");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  void terminate() {
    if (in_ >= 0) ::close(in_), in_ = -1;
    if (out_ >= 0) ::close(out_), out_ = -1;
    if (pid_ > 0) {
      int status = 0;
      // Give a well-behaved adapter a moment to exit on stdin close.
      for (int i = 0; i < 20; ++i) {
        if (::waitpid(pid_, &status, WNOHANG) == pid_) {
          pid_ = -1;
          return;
        }
        ::usleep(5000);
      }
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, &status, 0);
      pid_ = -1;
    }
  }

 private:
  pid_t pid_ = -1;
  int in_ = -1;
  int out_ = -1;
  std::string buffer_;
};

struct AdapterConfig {
  std::vector<std::string> command;
  AdapterRole role = AdapterRole::kAsr;
  std::chrono::milliseconds timeout{10000};
  std::size_t pool_size = 1;
};

// One child process, one request in flight.
class AdapterClient {
 public:
  explicit AdapterClient(const AdapterConfig& cfg) : cfg_(cfg), child_(cfg.command) {
    nlohmann::json hello = {{"type", "hello"}, {"role", to_string(cfg.role)}, {"version", kAdapterProtocolVersion}};
    const auto reply = exchange(hello, 0);
    if (reply.value("type", "") != "ready")
      throw TransportError(TransportError::Kind::kProtocol, 0, "expected ready, got " + reply.dump());
  }

  AdapterRole role() const noexcept { return cfg_.role; }
  bool healthy() const noexcept { return healthy_; }
  pid_t pid() const noexcept { return child_.pid(); }

  AudioBuffer synth(const std::string& text) {
    if (cfg_.role != AdapterRole::kTts) throw InvalidArgument("synth on a non-TTS adapter");
    const auto id = ++next_id_;
    const auto reply = exchange({{"type", "synth"}, {"id", id}, {"text", text}}, id);
    expect(reply, "audio", id);
    try {
      const int sr = reply.at("sample_rate").get<int>();
      auto audio = audio_from_pcm16_base64(reply.at("pcm16_b64").get<std::string>(), sr);
      if (sr != kDefaultSampleRate) {
        audio.samples = resample(audio.samples, sr, kDefaultSampleRate);
        audio.sample_rate = kDefaultSampleRate;
      }
      return audio;
    } catch (const TransportError&) {
      throw;
    } catch (const std::exception& e) {
      healthy_ = false;
      throw TransportError(TransportError::Kind::kProtocol, id, e.what());
    }
  }

  std::string transcribe(const AudioBuffer& audio) {
    if (cfg_.role != AdapterRole::kAsr) throw InvalidArgument("transcribe on a non-ASR adapter");
    const auto id = ++next_id_;
    if (audio.empty()) throw TransportError(TransportError::Kind::kProtocol, id, "zero-length audio");
    const auto reply = exchange({{"type", "transcribe"},
                                 {"id", id},
                                 {"sample_rate", audio.sample_rate},
                                 {"pcm16_b64", pcm16_base64(audio)}},
                                id);
    expect(reply, "transcript", id);
    if (!reply.contains("text") || !reply["text"].is_string()) {
      healthy_ = false;
      throw TransportError(TransportError::Kind::kProtocol, id, "transcript without text");
    }
    return reply["text"].get<std::string>();
  }

 private:
  nlohmann::json exchange(const nlohmann::json& request, std::uint64_t id) {
    if (!healthy_) throw TransportError(TransportError::Kind::kExited, id, "adapter is not healthy");
    if (!child_.write_line(request.dump())) {
      healthy_ = false;
      throw TransportError(TransportError::Kind::kExited, id, "write to adapter failed");
    }
    std::optional<std::string> line;
    try {
      line = child_.read_line(cfg_.timeout, id);
    } catch (...) {
      healthy_ = false;
      throw;
    }
    if (!line) {
      healthy_ = false;
      throw TransportError(TransportError::Kind::kTimeout, id, "no reply within timeout");
    }
    nlohmann::json reply = nlohmann::json::parse(*line, nullptr, false);
    if (reply.is_discarded() || !reply.is_object()) {
      healthy_ = false;
      throw TransportError(TransportError::Kind::kProtocol, id, "unparseable reply line");
    }
    return reply;
  }

  void expect(const nlohmann::json& reply, const std::string& type, std::uint64_t id) {
    const auto t = reply.value("type", "");
    if (t == "error") {
      // Remote per-request failure; the child stays usable.
      throw TransportError(TransportError::Kind::kRemote, id, reply.value("message", "unspecified"));
    }
    if (t != type || reply.value("id", std::uint64_t{0}) != id) {
      healthy_ = false;
      throw TransportError(TransportError::Kind::kProtocol, id, "unexpected reply " + reply.dump().substr(0, 200));
    }
  }

  AdapterConfig cfg_;
  ChildProcess child_;
  std::uint64_t next_id_ = 0;
  bool healthy_ = true;
};

// Fixed-size pool of adapter children. Unhealthy children are replaced on
// the next acquire.
class AdapterPool {
 public:
  explicit AdapterPool(AdapterConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.pool_size == 0) cfg_.pool_size = 1;
  }

  class Lease {
   public:
    Lease(AdapterPool* pool, std::unique_ptr<AdapterClient> c) : pool_(pool), client_(std::move(c)) {}
    Lease(Lease&&) = default;
    ~Lease() {
      if (client_) pool_->release(std::move(client_));
    }
    AdapterClient* operator->() { return client_.get(); }
    AdapterClient& operator*() { return *client_; }

   private:
    AdapterPool* pool_;
    std::unique_ptr<AdapterClient> client_;
  };

  Lease acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return !idle_.empty() || live_ < cfg_.pool_size; });
    if (!idle_.empty()) {
      auto c = std::move(idle_.back());
      idle_.pop_back();
      return Lease(this, std::move(c));
    }
    ++live_;
    lock.unlock();
    try {
      return Lease(this, std::make_unique<AdapterClient>(cfg_));
    } catch (...) {
      std::lock_guard relock(mu_);
      --live_;
      cv_.notify_one();
      throw;
    }
  }

  // Runs fn on a leased client; a transport failure is retried once on a
  // fresh child, then propagated so the caller can abort the run.
  template <typename Fn>
  auto call(Fn&& fn) {
    for (int attempt = 0;; ++attempt) {
      auto lease = acquire();
      try {
        return fn(*lease);
      } catch (const TransportError& e) {
        if (attempt >= 1 || e.kind() == TransportError::Kind::kRemote) throw;
      }
    }
  }

  const AdapterConfig& config() const noexcept { return cfg_; }

 private:
  void release(std::unique_ptr<AdapterClient> c) {
    std::lock_guard lock(mu_);
    if (c->healthy()) {
      idle_.push_back(std::move(c));
    } else {
      --live_;
      c.reset();
    }
    cv_.notify_one();
  }

  AdapterConfig cfg_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::vector<std::unique_ptr<AdapterClient>> idle_;
  std::size_t live_ = 0;
};

// Named pools, looked up by the adapter ids that listener specs carry.
class AdapterRegistry {
 public:
  void add(const std::string& id, AdapterConfig cfg) {
    std::lock_guard lock(mu_);
    pools_[id] = std::make_unique<AdapterPool>(std::move(cfg));
  }

  AdapterPool& get(const std::string& id) {
    std::lock_guard lock(mu_);
    auto it = pools_.find(id);
    if (it == pools_.end()) throw InvalidArgument("no adapter registered as '" + id + "'");
    return *it->second;
  }

  // TTS output is deterministic per text, so clean renditions are cached.
  AudioBuffer synth_cached(const std::string& id, const std::string& text) {
    {
      std::lock_guard lock(mu_);
      if (auto it = synth_cache_.find({id, text}); it != synth_cache_.end()) return it->second;
    }
    auto audio = get(id).call([&](AdapterClient& c) { return c.synth(text); });
    std::lock_guard lock(mu_);
    synth_cache_.emplace(std::make_pair(id, text), audio);
    return audio;
  }

 private:
  std::mutex mu_;
  std::map<std::string, std::unique_ptr<AdapterPool>> pools_;
  std::map<std::pair<std::string, std::string>, AudioBuffer> synth_cache_;
};

}  // namespace pairsim

#endif  // PAIRSIM_ADAPTER_HPP_
