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

// Acoustic degradation channel: audiogram-shaped attenuation and seeded
// noise at a calibrated SNR.
//
// Attenuation is applied as a zero-phase gain over the FFT of the whole
// buffer. The gain curve interpolates the audiogram linearly in
// log-frequency between anchors and holds the end values flat outside them.

#ifndef PAIRSIM_HEARING_DSP_HPP_
#define PAIRSIM_HEARING_DSP_HPP_

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "pairsim/audio.hpp"
#include "pairsim/common.hpp"
#include "pairsim/fft.hpp"
#include "pairsim/rng.hpp"

namespace pairsim {

struct AudiogramProfile {
  std::string name;
  std::vector<std::pair<double, double>> anchors;  // (Hz, dB attenuation)

  void validate() const {
    if (anchors.size() < 2) throw InvalidArgument("profile '" + name + "' needs >= 2 anchors");
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      if (!(anchors[i].first > 0.0)) throw InvalidArgument("profile anchor frequency must be > 0");
      if (!(anchors[i].second >= 0.0) || !std::isfinite(anchors[i].second))
        throw InvalidArgument("profile attenuation must be finite and >= 0");
      if (i && !(anchors[i].first > anchors[i - 1].first))
        throw InvalidArgument("profile frequencies must be strictly increasing");
    }
  }

  // dB of attenuation at `hz`.
  double attenuation_at(double hz) const {
    if (hz <= anchors.front().first) return anchors.front().second;
    if (hz >= anchors.back().first) return anchors.back().second;
    const double lf = std::log(hz);
    for (std::size_t i = 1; i < anchors.size(); ++i) {
      if (hz <= anchors[i].first) {
        const double l0 = std::log(anchors[i - 1].first), l1 = std::log(anchors[i].first);
        const double t = (lf - l0) / (l1 - l0);
        return anchors[i - 1].second + t * (anchors[i].second - anchors[i - 1].second);
      }
    }
    return anchors.back().second;
  }

  friend bool operator==(const AudiogramProfile&, const AudiogramProfile&) = default;
};

// Standard audiometric frequencies the seven-value profiles are anchored at.
inline constexpr std::array<double, 7> kAudiometricFrequencies = {250, 500, 1000, 2000,
                                                                  3000, 4000, 6000};

inline AudiogramProfile make_profile(std::string name, const std::array<double, 7>& attenuation_db) {
  AudiogramProfile p{std::move(name), {}};
  for (std::size_t i = 0; i < 7; ++i) p.anchors.emplace_back(kAudiometricFrequencies[i], attenuation_db[i]);
  p.validate();
  return p;
}

inline AudiogramProfile normal_profile() { return make_profile("normal", {0, 0, 0, 0, 0, 0, 0}); }
inline AudiogramProfile mild_profile() { return make_profile("mild", {0, 0, 0, 20, 25, 30, 40}); }
// Placeholder shape between mild and profound.
inline AudiogramProfile moderate_profile() {
  return make_profile("moderate", {0, 0, 10, 30, 40, 45, 55});
}
// 85 dB at 3/4/6 kHz; the lower anchors are an illustrative sloping loss.
inline AudiogramProfile profound_profile() {
  return make_profile("profound", {10, 20, 35, 60, 85, 85, 85});
}

inline AudiogramProfile named_profile(const std::string& name) {
  if (name == "normal" || name == "none" || name == "clean") return normal_profile();
  if (name == "mild") return mild_profile();
  if (name == "moderate") return moderate_profile();
  if (name == "profound") return profound_profile();
  throw InvalidArgument("unknown profile '" + name + "'");
}

enum class NoiseKind { kWhite, kSpeechShaped };

inline std::string to_string(NoiseKind k) { return k == NoiseKind::kWhite ? "white" : "speech_shaped"; }

inline NoiseKind parse_noise_kind(const std::string& s) {
  if (s == "white") return NoiseKind::kWhite;
  if (s == "speech_shaped" || s == "speech-shaped") return NoiseKind::kSpeechShaped;
  throw InvalidArgument("unknown noise kind '" + s + "'");
}

enum class DegradeOrder { kNoiseThenFilter, kFilterThenNoise };

inline constexpr double kNoNoise = std::numeric_limits<double>::infinity();

struct DegradationSpec {
  AudiogramProfile profile = normal_profile();
  double snr_db = kNoNoise;  // +inf: no noise
  std::uint64_t noise_seed = 0;
  NoiseKind noise_kind = NoiseKind::kSpeechShaped;
  DegradeOrder order = DegradeOrder::kNoiseThenFilter;

  bool noiseless() const { return std::isinf(snr_db) && snr_db > 0; }

  void validate() const {
    profile.validate();
    if (std::isnan(snr_db) || (std::isinf(snr_db) && snr_db < 0))
      throw InvalidArgument("snr_db must be finite or +infinity");
  }

  friend bool operator==(const DegradationSpec&, const DegradationSpec&) = default;
};

// Short label such as "mild@10" or "normal@inf", used in seeds and URLs.
inline std::string condition_label(const DegradationSpec& spec) {
  return spec.profile.name + "@" + (spec.noiseless() ? std::string("inf") : util::format_double(spec.snr_db));
}

inline AudioBuffer apply_audiogram(const AudioBuffer& audio, const AudiogramProfile& profile) {
  if (audio.empty()) throw InvalidArgument("apply_audiogram: empty audio");
  profile.validate();
  RealFft fft(audio.size());
  auto spec = fft.forward(audio.samples);
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double hz = bin_frequency(k, audio.size(), audio.sample_rate);
    spec[k] *= std::pow(10.0, -profile.attenuation_at(hz) / 20.0);
  }
  return {fft.inverse(spec), audio.sample_rate};
}

// Gaussian noise, unit RMS before shaping. Speech-shaped noise falls off at
// 12 dB/octave above 500 Hz.
inline std::vector<double> generate_noise(std::size_t n, int sample_rate, NoiseKind kind,
                                          std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (auto& v : x) v = rng.gaussian();
  if (kind == NoiseKind::kSpeechShaped && n > 1) {
    RealFft fft(n);
    auto spec = fft.forward(x);
    for (std::size_t k = 0; k < spec.size(); ++k) {
      const double hz = bin_frequency(k, n, sample_rate);
      if (hz > 500.0) spec[k] *= (500.0 / hz) * (500.0 / hz);
    }
    x = fft.inverse(spec);
  }
  return x;
}

// The noise component mix_noise would add: scaled so that
// 20*log10(rms(audio) / rms(noise)) == snr_db.
inline std::vector<double> scaled_noise(const AudioBuffer& audio, double snr_db, NoiseKind kind,
                                        std::uint64_t seed) {
  const double speech = rms(audio);
  if (!(speech > 0.0)) throw InvalidArgument("mix_noise: speech has zero RMS");
  auto noise = generate_noise(audio.size(), audio.sample_rate, kind, seed);
  const double n_rms = rms(AudioBuffer{noise, audio.sample_rate});
  const double gain = speech / std::pow(10.0, snr_db / 20.0) / n_rms;
  for (auto& v : noise) v *= gain;
  return noise;
}

inline AudioBuffer mix_noise(const AudioBuffer& audio, double snr_db, NoiseKind kind, std::uint64_t seed) {
  if (audio.empty()) throw InvalidArgument("mix_noise: empty audio");
  if (std::isinf(snr_db) && snr_db > 0) return audio;
  if (!std::isfinite(snr_db)) throw InvalidArgument("mix_noise: snr_db must be finite or +inf");
  const auto noise = scaled_noise(audio, snr_db, kind, seed);
  AudioBuffer out = audio;
  for (std::size_t i = 0; i < out.size(); ++i) out.samples[i] += noise[i];
  return out;
}

inline AudioBuffer degrade(const AudioBuffer& audio, const DegradationSpec& spec) {
  spec.validate();
  if (spec.order == DegradeOrder::kNoiseThenFilter)
    return apply_audiogram(mix_noise(audio, spec.snr_db, spec.noise_kind, spec.noise_seed), spec.profile);
  return mix_noise(apply_audiogram(audio, spec.profile), spec.snr_db, spec.noise_kind, spec.noise_seed);
}

}  // namespace pairsim

#endif  // PAIRSIM_HEARING_DSP_HPP_
