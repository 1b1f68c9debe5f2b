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

#include <chrono>
#include <thread>

#include "catch_amalgamated.hpp"
#include "pairsim/adapter.hpp"
#include "pairsim/parallel.hpp"
#include "support/test_support.hpp"

using namespace pairsim;
using namespace std::chrono_literals;

namespace {

AdapterConfig cfg(AdapterRole role, std::vector<std::string> extra = {}, std::chrono::milliseconds timeout = 5000ms,
                  std::size_t pool = 1) {
  std::vector<std::string> cmd = {testsupport::fake_adapter(), role == AdapterRole::kTts ? "tts" : "asr"};
  cmd.insert(cmd.end(), extra.begin(), extra.end());
  return {cmd, role, timeout, pool};
}

TransportError::Kind failure_kind(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const TransportError& e) {
    return e.kind();
  }
  FAIL("expected a TransportError");
  return TransportError::Kind::kSpawn;
}

}  // namespace

TEST_CASE("handshake and 100 round trips") {
  AdapterClient tts(cfg(AdapterRole::kTts));
  AdapterClient asr(cfg(AdapterRole::kAsr));
  for (int i = 0; i < 100; ++i) {
    const std::string word = i % 2 ? "crab" : "sealing";
    const auto audio = tts.synth(word);
    REQUIRE(audio.sample_rate == kDefaultSampleRate);
    REQUIRE(asr.transcribe(audio) == word);
  }
  CHECK(tts.healthy());
  CHECK(asr.healthy());
}

TEST_CASE("TTS output at another rate is resampled") {
  AdapterClient tts(cfg(AdapterRole::kTts, {"--rate", "22050"}));
  const auto audio = tts.synth("ab");
  CHECK(audio.sample_rate == kDefaultSampleRate);
  CHECK(audio.size() >= 2 * 1120 - 4);
  CHECK(audio.size() <= 2 * 1120 + 4);
  AdapterClient asr(cfg(AdapterRole::kAsr));
  CHECK(asr.transcribe(audio) == "ab");
}

TEST_CASE("error frames are per-request and leave the child usable") {
  AdapterClient tts(cfg(AdapterRole::kTts, {"--error-on", "bad"}));
  CHECK(failure_kind([&] { tts.synth("bad"); }) == TransportError::Kind::kRemote);
  CHECK(tts.healthy());
  CHECK(tts.synth("ok").size() > 0);
}

TEST_CASE("role misuse is an argument error") {
  AdapterClient tts(cfg(AdapterRole::kTts));
  CHECK_THROWS_AS(tts.transcribe(AudioBuffer{{0.1}, 16000}), InvalidArgument);
  AdapterClient asr(cfg(AdapterRole::kAsr));
  CHECK_THROWS_AS(asr.synth("x"), InvalidArgument);
  CHECK(failure_kind([&] { asr.transcribe(AudioBuffer{}); }) == TransportError::Kind::kProtocol);
}

TEST_CASE("failure modes map to transport error kinds") {
  SECTION("crash") {
    AdapterClient c(cfg(AdapterRole::kTts, {"--crash-after", "2"}));
    CHECK(c.synth("a").size() > 0);
    CHECK(failure_kind([&] { c.synth("b"); }) == TransportError::Kind::kExited);
    CHECK_FALSE(c.healthy());
    CHECK(failure_kind([&] { c.synth("c"); }) == TransportError::Kind::kExited);
  }
  SECTION("hang") {
    AdapterClient c(cfg(AdapterRole::kTts, {"--hang-after", "1"}, 300ms));
    const auto t0 = std::chrono::steady_clock::now();
    CHECK(failure_kind([&] { c.synth("a"); }) == TransportError::Kind::kTimeout);
    CHECK(std::chrono::steady_clock::now() - t0 < 3s);
    CHECK_FALSE(c.healthy());
  }
  SECTION("garbage") {
    AdapterClient c(cfg(AdapterRole::kTts, {"--garbage-after", "1"}));
    CHECK(failure_kind([&] { c.synth("a"); }) == TransportError::Kind::kProtocol);
  }
  SECTION("bad handshake") {
    CHECK(failure_kind([&] { AdapterClient c(cfg(AdapterRole::kTts, {"--bad-handshake"})); }) ==
          TransportError::Kind::kProtocol);
  }
  SECTION("role mismatch at handshake") {
    auto c = cfg(AdapterRole::kTts);
    c.command[1] = "asr";
    const auto k = failure_kind([&] { AdapterClient x(c); });
    CHECK((k == TransportError::Kind::kProtocol || k == TransportError::Kind::kExited));
  }
  SECTION("missing executable") {
    AdapterConfig c{{"/nonexistent/adapter-binary"}, AdapterRole::kTts, 2000ms, 1};
    CHECK(failure_kind([&] { AdapterClient x(c); }) == TransportError::Kind::kExited);
  }
}

TEST_CASE("pool retries a crashed child once on a fresh one") {
  testsupport::TempDir dir;
  const auto marker = (dir / "crashed").string();
  AdapterPool pool(cfg(AdapterRole::kTts, {"--crash-once", marker}));
  const auto audio = pool.call([](AdapterClient& c) { return c.synth("ok"); });
  CHECK(audio.size() > 0);
  CHECK(std::filesystem::exists(marker));

  AdapterPool always(cfg(AdapterRole::kTts, {"--crash-after", "1"}));
  CHECK_THROWS_AS(always.call([](AdapterClient& c) { return c.synth("x"); }), TransportError);

  AdapterPool remote(cfg(AdapterRole::kTts, {"--error-on", "bad"}));
  CHECK(failure_kind([&] { remote.call([](AdapterClient& c) { return c.synth("bad"); }); }) ==
        TransportError::Kind::kRemote);
}

TEST_CASE("pool serves concurrent callers with bounded children") {
  AdapterPool pool(cfg(AdapterRole::kAsr, {}, 5000ms, 3));
  AdapterClient tts(cfg(AdapterRole::kTts));
  const std::vector<std::string> words = {"a", "bb", "cab", "dad", "ebb", "fee", "gag", "hah"};
  std::vector<AudioBuffer> audio;
  for (const auto& w : words) audio.push_back(tts.synth(w));
  std::vector<std::string> got(40);
  parallel_for(got.size(), 6, [&](std::size_t i) {
    got[i] = pool.call([&](AdapterClient& c) { return c.transcribe(audio[i % words.size()]); });
  });
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == words[i % words.size()]);
}

TEST_CASE("registry caches synthesis per text") {
  AdapterRegistry reg;
  reg.add("tts", cfg(AdapterRole::kTts));
  const auto a = reg.synth_cached("tts", "hello");
  const auto b = reg.synth_cached("tts", "hello");
  CHECK(a == b);
  CHECK_THROWS_AS(reg.get("missing"), InvalidArgument);
}
