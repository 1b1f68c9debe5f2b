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
#include "pairsim/hearing_dsp.hpp"

using namespace pairsim;

namespace {

AudioBuffer sine(double hz, double seconds = 1.0, int sr = 16000) {
  AudioBuffer a;
  a.sample_rate = sr;
  a.samples.resize(static_cast<std::size_t>(seconds * sr));
  for (std::size_t i = 0; i < a.size(); ++i) a.samples[i] = 0.5 * std::sin(2 * M_PI * hz * i / sr);
  return a;
}

double db(double ratio) { return 20.0 * std::log10(ratio); }

AudioBuffer noisy_word(std::uint64_t seed) {
  Rng rng(seed);
  AudioBuffer a;
  a.samples.resize(8000);
  for (std::size_t i = 0; i < a.size(); ++i)
    a.samples[i] = 0.3 * std::sin(2 * M_PI * 220 * i / 16000.0) + 0.05 * rng.gaussian();
  return a;
}

}  // namespace

TEST_CASE("audiogram interpolation is linear in log frequency and flat outside") {
  const auto p = mild_profile();
  CHECK(p.attenuation_at(100) == 0.0);
  CHECK(p.attenuation_at(2000) == 20.0);
  CHECK(p.attenuation_at(8000) == 40.0);
  CHECK(p.attenuation_at(std::sqrt(2000.0 * 3000.0)) == Catch::Approx(22.5));
  // Monotone between the anchors of a rising profile.
  double prev = 0.0;
  for (double hz = 100; hz < 8000; hz *= 1.05) {
    const double v = p.attenuation_at(hz);
    CHECK(v >= prev - 1e-12);
    prev = v;
  }
}

TEST_CASE("named profiles and validation") {
  CHECK(named_profile("normal") == normal_profile());
  CHECK(named_profile("profound").attenuation_at(4000) == 85.0);
  CHECK(named_profile("profound").attenuation_at(3000) == 85.0);
  CHECK(named_profile("profound").attenuation_at(6000) == 85.0);
  CHECK_THROWS_AS(named_profile("nope"), InvalidArgument);
  AudiogramProfile bad{"bad", {{1000, 0}, {500, 10}}};
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  CHECK_THROWS_AS((AudiogramProfile{"neg", {{500, -1}, {1000, 0}}}.validate()), InvalidArgument);
  CHECK_THROWS_AS((AudiogramProfile{"one", {{500, 1}}}.validate()), InvalidArgument);
}

TEST_CASE("tone attenuation follows the audiogram") {
  const auto p = make_profile("hf", {0, 0, 0, 10, 25, 40, 60});
  for (double hz : {500.0, 2000.0, 3000.0, 4000.0, 6000.0}) {
    const auto x = sine(hz);
    const auto y = apply_audiogram(x, p);
    CHECK(db(rms(x) / rms(y)) == Catch::Approx(p.attenuation_at(hz)).margin(0.01));
  }
}

TEST_CASE("mix_noise hits the requested SNR for both noise kinds") {
  const auto x = noisy_word(1);
  for (auto kind : {NoiseKind::kWhite, NoiseKind::kSpeechShaped}) {
    for (double snr : {20.0, 10.0, 5.0, 0.0, -5.0}) {
      const auto y = mix_noise(x, snr, kind, 42);
      std::vector<double> n(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) n[i] = y.samples[i] - x.samples[i];
      CHECK(db(rms(x) / rms(AudioBuffer{n, 16000})) == Catch::Approx(snr).margin(1e-6));
    }
  }
  CHECK(mix_noise(x, kNoNoise, NoiseKind::kWhite, 1) == x);
  CHECK_THROWS_AS(mix_noise(x, std::nan(""), NoiseKind::kWhite, 1), InvalidArgument);
  CHECK_THROWS_AS(mix_noise(AudioBuffer{std::vector<double>(100, 0.0), 16000}, 0.0, NoiseKind::kWhite, 1),
                  InvalidArgument);
}

TEST_CASE("noise is seeded and speech-shaped noise tilts downward") {
  CHECK(generate_noise(1000, 16000, NoiseKind::kWhite, 5) == generate_noise(1000, 16000, NoiseKind::kWhite, 5));
  CHECK(generate_noise(1000, 16000, NoiseKind::kWhite, 5) != generate_noise(1000, 16000, NoiseKind::kWhite, 6));
  const auto n = generate_noise(16000, 16000, NoiseKind::kSpeechShaped, 3);
  RealFft fft(n.size());
  const auto X = fft.forward(n);
  double low = 0.0, high = 0.0;
  for (std::size_t k = 0; k < X.size(); ++k) {
    const double hz = bin_frequency(k, n.size(), 16000);
    if (hz >= 200 && hz < 400) low += std::norm(X[k]);
    if (hz >= 4000 && hz < 4200) high += std::norm(X[k]);
  }
  // 12 dB/octave above 500 Hz: 4.1 kHz sits about three octaves up.
  CHECK(10 * std::log10(low / high) == Catch::Approx(40.0 * std::log10(4100.0 / 500.0)).margin(1.5));
}

TEST_CASE("degrade order and identity") {
  const auto x = noisy_word(2);
  DegradationSpec ident;
  const auto y = degrade(x, ident);
  double err = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) err += (y.samples[i] - x.samples[i]) * (y.samples[i] - x.samples[i]);
  CHECK(std::sqrt(err / x.size()) / rms(x) < 1e-12);

  DegradationSpec a;
  a.profile = mild_profile();
  a.snr_db = 5;
  a.noise_seed = 77;
  DegradationSpec b = a;
  b.order = DegradeOrder::kFilterThenNoise;
  CHECK(degrade(x, a) == degrade(x, a));
  CHECK(degrade(x, a) != degrade(x, b));
  DegradationSpec bad;
  bad.snr_db = -kNoNoise;
  CHECK_THROWS_AS(degrade(x, bad), InvalidArgument);
}

TEST_CASE("condition labels") {
  DegradationSpec d;
  CHECK(condition_label(d) == "normal@inf");
  d.profile = mild_profile();
  d.snr_db = 10;
  CHECK(condition_label(d) == "mild@10");
  d.snr_db = -2.5;
  CHECK(condition_label(d) == "mild@-2.5");
}
