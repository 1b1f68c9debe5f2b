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

#include <cmath>

#include "catch_amalgamated.hpp"
#include "pairsim/adapter.hpp"
#include "pairsim/audio.hpp"
#include "pairsim/fft.hpp"
#include "pairsim/rng.hpp"
#include "support/test_support.hpp"

using namespace pairsim;

namespace {

AudioBuffer sine(double hz, double seconds, int sr, double amp = 0.5) {
  AudioBuffer a;
  a.sample_rate = sr;
  a.samples.resize(static_cast<std::size_t>(seconds * sr));
  for (std::size_t i = 0; i < a.size(); ++i) a.samples[i] = amp * std::sin(2 * M_PI * hz * i / sr);
  return a;
}

}  // namespace

TEST_CASE("WAV round trip is exact at PCM16 resolution") {
  Rng rng(5);
  AudioBuffer a;
  a.samples.resize(1234);
  for (auto& s : a.samples) s = static_cast<double>(static_cast<std::int64_t>(rng.below(65536)) - 32768) / 32768.0;
  const auto bytes = encode_wav(a);
  CHECK(bytes.size() == 44 + 2 * a.size());
  CHECK(bytes.substr(0, 4) == "RIFF");
  CHECK(decode_wav(bytes) == a);
}

TEST_CASE("PCM16 quantization clamps and rounds") {
  const auto q = to_pcm16({1.5, -1.5, 0.0, 0.5, -1.0});
  CHECK(q == std::vector<std::int16_t>{32767, -32768, 0, 16384, -32768});
  CHECK(from_pcm16({16384})[0] == 0.5);
}

TEST_CASE("decode_wav handles stereo, odd chunks and rejects garbage") {
  // Hand-built stereo file with an odd-sized LIST chunk before data.
  std::string s = "RIFF";
  detail::put_u32(s, 0);
  s += "WAVEfmt ";
  detail::put_u32(s, 16);
  detail::put_u16(s, 1);
  detail::put_u16(s, 2);
  detail::put_u32(s, 16000);
  detail::put_u32(s, 64000);
  detail::put_u16(s, 4);
  detail::put_u16(s, 16);
  s += "LIST";
  detail::put_u32(s, 3);
  s += "abc";
  s += '\0';
  s += "data";
  detail::put_u32(s, 8);
  for (std::int16_t v : {1000, 3000, -2000, -4000}) detail::put_u16(s, static_cast<std::uint16_t>(v));
  const auto a = decode_wav(s);
  REQUIRE(a.size() == 2);
  CHECK(a.samples[0] == Catch::Approx(2000 / 32768.0));
  CHECK(a.samples[1] == Catch::Approx(-3000 / 32768.0));

  CHECK_THROWS_AS(decode_wav("not a wav"), InvalidArgument);
  std::string truncated = encode_wav(sine(440, 0.01, 16000));
  truncated.resize(truncated.size() - 10);
  CHECK_THROWS_AS(decode_wav(truncated), InvalidArgument);
}

TEST_CASE("resampling preserves a low tone") {
  const auto a = sine(440, 0.5, 22050);
  const auto y = resample(a.samples, 22050, 16000);
  CHECK(y.size() == 8000);
  const auto ref = sine(440, 0.5, 16000);
  double err = 0.0, energy = 0.0;
  for (std::size_t i = 200; i + 200 < y.size(); ++i) {
    err += (y[i] - ref.samples[i]) * (y[i] - ref.samples[i]);
    energy += ref.samples[i] * ref.samples[i];
  }
  CHECK(std::sqrt(err / energy) < 1e-2);
  CHECK(resample(a.samples, 16000, 16000) == a.samples);
  CHECK_THROWS_AS(resample(a.samples, 0, 16000), InvalidArgument);
}

TEST_CASE("FFT round trip and Parseval") {
  Rng rng(9);
  for (std::size_t n : {1u, 2u, 7u, 64u, 1000u}) {
    std::vector<double> x(n);
    for (auto& v : x) v = rng.gaussian();
    RealFft fft(n);
    const auto X = fft.forward(x);
    const auto y = fft.inverse(X);
    double time_e = 0.0, freq_e = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      REQUIRE(y[i] == Catch::Approx(x[i]).margin(1e-12));
      time_e += x[i] * x[i];
    }
    for (std::size_t k = 0; k < X.size(); ++k) {
      const bool edge = k == 0 || (n % 2 == 0 && k == n / 2);
      freq_e += std::norm(X[k]) * (edge ? 1.0 : 2.0);
    }
    CHECK(freq_e / static_cast<double>(n) == Catch::Approx(time_e).epsilon(1e-10));
  }
  CHECK_THROWS_AS(RealFft(0), InvalidArgument);
}

TEST_CASE("base64 PCM payload round trip") {
  const auto a = sine(300, 0.05, 16000);
  const auto b = audio_from_pcm16_base64(pcm16_base64(a), 16000);
  REQUIRE(b.size() == a.size());
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(std::fabs(a.samples[i] - b.samples[i]) <= 0.5 / 32768.0 + 1e-15);
  CHECK_THROWS_AS(audio_from_pcm16_base64("!!!!", 16000), InvalidArgument);
}

TEST_CASE("rms and audio checks") {
  CHECK(rms(sine(1000, 1.0, 16000, 1.0)) == Catch::Approx(std::sqrt(0.5)).epsilon(1e-9));
  CHECK_THROWS_AS(rms(AudioBuffer{}), InvalidArgument);
  CHECK_THROWS_AS(check_audio(AudioBuffer{{0.0, std::nan("")}, 16000}), InvalidArgument);
  CHECK_THROWS_AS(check_audio(AudioBuffer{{0.0}, 0}), InvalidArgument);
}

TEST_CASE("WAV files on disk") {
  testsupport::TempDir dir;
  const auto a = sine(500, 0.1, 16000);
  write_wav((dir / "x.wav").string(), a);
  const auto b = read_wav((dir / "x.wav").string());
  CHECK(b.size() == a.size());
  CHECK_THROWS_AS(read_wav((dir / "missing.wav").string()), Error);
}
