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

// Octave-band SII, global spectral features and the two statistics used to
// relate them to diagnostic scores.
//
// The SII here is the simplified octave-band method: no upward spread of
// masking and no speech level distortion factor.

#ifndef PAIRSIM_ANALYSIS_HPP_
#define PAIRSIM_ANALYSIS_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "pairsim/audio.hpp"
#include "pairsim/common.hpp"
#include "pairsim/diagnostics.hpp"
#include "pairsim/fft.hpp"
#include "pairsim/hearing_dsp.hpp"

namespace pairsim {

inline constexpr std::size_t kBands = 6;
inline constexpr std::array<double, kBands> kOctaveCenters = {250, 500, 1000, 2000, 4000, 8000};

// A full-scale sine (mean square 0.5) reads 94 dB.
inline const double kFullScaleSineDb = 94.0;
inline const double kLevelOffsetDb = kFullScaleSineDb - 10.0 * std::log10(0.5);
inline constexpr double kLevelFloorDb = -50.0;
inline constexpr double kSpeechPresentationDb = 65.0;

using BandLevels = std::array<double, kBands>;

// Band-importance weights and reference internal noise spectrum levels
// (dB per Hz) for the octave method. The same numbers are shipped in
// data/sii_octave_bands.json and can be loaded from there.
struct SiiTable {
  BandLevels importance = {0.0617, 0.1671, 0.2373, 0.2648, 0.2142, 0.0549};
  BandLevels internal_noise_spectrum = {-3.9, -9.7, -12.5, -17.7, -25.9, -7.1};

  // Spectrum level plus 10*log10(octave bandwidth), bandwidth = f/sqrt(2).
  BandLevels internal_noise_band() const {
    BandLevels out{};
    for (std::size_t i = 0; i < kBands; ++i)
      out[i] = internal_noise_spectrum[i] + 10.0 * std::log10(kOctaveCenters[i] / std::sqrt(2.0));
    return out;
  }

  friend bool operator==(const SiiTable&, const SiiTable&) = default;
};

inline double level_db(double mean_square) {
  if (!(mean_square > 0.0)) return kLevelFloorDb;
  return std::max(kLevelFloorDb, 10.0 * std::log10(mean_square) + kLevelOffsetDb);
}

// Mean-square power in each band [f/sqrt2, f*sqrt2), from the FFT of the
// whole buffer (Parseval), as calibrated dB.
inline BandLevels octave_band_levels(const AudioBuffer& audio) {
  check_audio(audio);
  // 50 ms keeps several FFT bins inside the narrowest (250 Hz) band.
  if (audio.size() < static_cast<std::size_t>(audio.sample_rate) / 20)
    throw InvalidArgument("octave_band_levels: need at least 50 ms of audio");
  const std::size_t n = audio.size();
  RealFft fft(n);
  const auto spec = fft.forward(audio.samples);
  std::array<double, kBands> power{};
  const double norm = 1.0 / (static_cast<double>(n) * static_cast<double>(n));
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double hz = bin_frequency(k, n, audio.sample_rate);
    const bool edge = k == 0 || (n % 2 == 0 && k == n / 2);
    const double p = std::norm(spec[k]) * norm * (edge ? 1.0 : 2.0);
    for (std::size_t b = 0; b < kBands; ++b) {
      if (hz >= kOctaveCenters[b] / std::sqrt(2.0) && hz < kOctaveCenters[b] * std::sqrt(2.0)) {
        power[b] += p;
        break;
      }
    }
  }
  BandLevels out{};
  for (std::size_t b = 0; b < kBands; ++b) out[b] = level_db(power[b]);
  return out;
}

inline double overall_level_db(const AudioBuffer& audio) {
  const double r = rms(audio);
  return level_db(r * r);
}

inline AudioBuffer normalize_level(const AudioBuffer& audio, double target_db) {
  const double r = rms(audio);
  if (!(r > 0.0)) throw InvalidArgument("normalize_level: silent audio");
  const double target_rms = std::sqrt(std::pow(10.0, (target_db - kLevelOffsetDb) / 10.0));
  AudioBuffer out = audio;
  for (auto& v : out.samples) v *= target_rms / r;
  return out;
}

inline double compute_sii(const BandLevels& speech, const BandLevels& noise, const BandLevels& threshold_shift,
                          const SiiTable& table = {}) {
  const auto internal = table.internal_noise_band();
  double sii = 0.0;
  for (std::size_t i = 0; i < kBands; ++i) {
    if (!std::isfinite(speech[i]) || !std::isfinite(noise[i]) || !std::isfinite(threshold_shift[i]))
      throw InvalidArgument("compute_sii: levels must be finite");
    const double disturbance = std::max(noise[i], internal[i] + threshold_shift[i]);
    const double audibility = std::clamp((speech[i] - disturbance + 15.0) / 30.0, 0.0, 1.0);
    sii += table.importance[i] * audibility;
  }
  return std::clamp(sii, 0.0, 1.0);
}

inline BandLevels threshold_shift(const AudiogramProfile& profile) {
  profile.validate();
  BandLevels out{};
  for (std::size_t i = 0; i < kBands; ++i) out[i] = profile.attenuation_at(kOctaveCenters[i]);
  return out;
}

struct NoiseSpec {
  double snr_db = kNoNoise;
  NoiseKind kind = NoiseKind::kSpeechShaped;
  std::uint64_t seed = 0;
};

struct SiiResult {
  double sii_normal = 0.0;
  double sii_impaired = 0.0;
  double delta = 0.0;
};

// The word is presented at 65 dB; noise (when finite SNR) is the same
// calibrated noise the degradation channel would add.
inline SiiResult sii_delta_for_word(const AudioBuffer& audio, const AudiogramProfile& profile,
                                    const NoiseSpec& noise, const SiiTable& table = {}) {
  const AudioBuffer speech = normalize_level(audio, kSpeechPresentationDb);
  const BandLevels s = octave_band_levels(speech);
  BandLevels nz;
  nz.fill(kLevelFloorDb);
  if (std::isnan(noise.snr_db) || (std::isinf(noise.snr_db) && noise.snr_db < 0))
    throw InvalidArgument("sii: snr must be finite or +inf");
  if (std::isfinite(noise.snr_db))
    nz = octave_band_levels({scaled_noise(speech, noise.snr_db, noise.kind, noise.seed), speech.sample_rate});
  BandLevels zero{};
  SiiResult r;
  r.sii_normal = compute_sii(s, nz, zero, table);
  r.sii_impaired = compute_sii(s, nz, threshold_shift(profile), table);
  r.delta = r.sii_normal - r.sii_impaired;
  return r;
}

struct StatResult {
  double statistic = 0.0;  // r or t
  double p_value = 1.0;
  double df = 0.0;
};

namespace detail {

inline double two_sided_p(double t, double df) {
  if (std::isinf(t)) return 0.0;
  boost::math::students_t dist(df);
  return std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t))), 0.0, 1.0);
}

inline double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sum of squared deviations from the mean.
inline double ssd(const std::vector<double>& v, double m) {
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s;
}

}  // namespace detail

inline StatResult pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw InvalidArgument("pearson: samples differ in length");
  if (x.size() < 3) throw InvalidArgument("pearson: need at least 3 points");
  const double mx = detail::mean(x), my = detail::mean(y);
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sxy += (x[i] - mx) * (y[i] - my);
  const double sxx = detail::ssd(x, mx), syy = detail::ssd(y, my);
  if (!(sxx > 0.0) || !(syy > 0.0)) throw InvalidArgument("pearson: zero variance");
  const double r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double df = static_cast<double>(x.size()) - 2.0;
  const double t = std::fabs(r) >= 1.0 ? std::copysign(std::numeric_limits<double>::infinity(), r)
                                       : r * std::sqrt(df / (1.0 - r * r));
  return {r, detail::two_sided_p(t, df), df};
}

enum class VarianceModel { kPooled, kWelch };

// Two-sample t-test. Zero variance in both samples gives p = 1 when the
// means agree and p = 0 (t = +-inf) when they differ.
inline StatResult ttest2(const std::vector<double>& a, const std::vector<double>& b,
                         VarianceModel model = VarianceModel::kPooled) {
  if (a.size() < 2 || b.size() < 2) throw InvalidArgument("ttest2: each sample needs at least 2 values");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double ma = detail::mean(a), mb = detail::mean(b);
  const double va = detail::ssd(a, ma) / (na - 1.0), vb = detail::ssd(b, mb) / (nb - 1.0);
  double se2 = 0.0, df = 0.0;
  if (model == VarianceModel::kPooled) {
    df = na + nb - 2.0;
    const double sp2 = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
    se2 = sp2 * (1.0 / na + 1.0 / nb);
  } else {
    se2 = va / na + vb / nb;
    const double num = se2 * se2;
    const double den = (va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0);
    df = den > 0.0 ? num / den : na + nb - 2.0;
  }
  const double diff = ma - mb;
  if (!(se2 > 0.0)) {
    if (diff == 0.0) return {0.0, 1.0, df};
    return {std::copysign(std::numeric_limits<double>::infinity(), diff), 0.0, df};
  }
  const double t = diff / std::sqrt(se2);
  return {t, detail::two_sided_p(t, df), df};
}

struct AcousticFeatures {
  double spectral_centroid = 0.0;  // Hz
  double spectral_skewness = 0.0;
  double spectral_kurtosis = 0.0;
  double spectral_flux = 0.0;
  double harmonic_ratio = 0.0;  // [0, 1]
};

inline constexpr std::array<const char*, 5> kFeatureNames = {"spectral_centroid", "spectral_skewness",
                                                             "spectral_kurtosis", "spectral_flux",
                                                             "harmonic_ratio"};

inline double feature_value(const AcousticFeatures& f, std::size_t i) {
  switch (i) {
    case 0: return f.spectral_centroid;
    case 1: return f.spectral_skewness;
    case 2: return f.spectral_kurtosis;
    case 3: return f.spectral_flux;
    case 4: return f.harmonic_ratio;
  }
  throw InvalidArgument("feature index out of range");
}

// 25 ms Hann frames every 10 ms. Moments describe each frame's magnitude
// spectrum as a distribution over frequency and are averaged over non-silent
// frames. Flux compares successive unit-sum spectra. The harmonic ratio is
// the peak normalized autocorrelation over 70-400 Hz pitch lags.
inline AcousticFeatures acoustic_features(const AudioBuffer& audio) {
  check_audio(audio);
  const int sr = audio.sample_rate;
  const std::size_t frame = static_cast<std::size_t>(std::lround(0.025 * sr));
  const std::size_t hop = static_cast<std::size_t>(std::lround(0.010 * sr));
  if (audio.size() < frame) throw InvalidArgument("acoustic_features: audio shorter than one frame");
  const std::size_t n_frames = 1 + (audio.size() - frame) / hop;
  if (n_frames < 3) throw InvalidArgument("acoustic_features: need at least 3 frames");
  const std::size_t min_lag = static_cast<std::size_t>(sr / 400);
  const std::size_t max_lag = std::min(frame - 1, static_cast<std::size_t>(sr / 70));

  std::vector<double> window(frame);
  for (std::size_t i = 0; i < frame; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(frame));

  RealFft fft(frame);
  const std::size_t bins = fft.bins();
  std::vector<double> freq(bins);
  for (std::size_t k = 0; k < bins; ++k) freq[k] = bin_frequency(k, frame, sr);

  AcousticFeatures out;
  std::size_t voiced = 0;
  double flux_sum = 0.0, harmonic_sum = 0.0;
  std::vector<double> prev(bins, 0.0), cur(bins), buf(frame);
  for (std::size_t f = 0; f < n_frames; ++f) {
    const double* x = audio.samples.data() + f * hop;
    for (std::size_t i = 0; i < frame; ++i) buf[i] = x[i] * window[i];
    const auto spec = fft.forward(buf);
    double total = 0.0;
    for (std::size_t k = 0; k < bins; ++k) total += (cur[k] = std::abs(spec[k]));
    if (total > 0.0) {
      for (auto& v : cur) v /= total;
      double mu = 0.0;
      for (std::size_t k = 0; k < bins; ++k) mu += freq[k] * cur[k];
      double m2 = 0.0, m3 = 0.0, m4 = 0.0;
      for (std::size_t k = 0; k < bins; ++k) {
        const double d = freq[k] - mu, d2 = d * d;
        m2 += d2 * cur[k];
        m3 += d2 * d * cur[k];
        m4 += d2 * d2 * cur[k];
      }
      out.spectral_centroid += mu;
      if (m2 > 0.0) {
        out.spectral_skewness += m3 / std::pow(m2, 1.5);
        out.spectral_kurtosis += m4 / (m2 * m2);
      }
      ++voiced;
    } else {
      std::fill(cur.begin(), cur.end(), 0.0);
    }
    if (f > 0) {
      double d = 0.0;
      for (std::size_t k = 0; k < bins; ++k) d += (cur[k] - prev[k]) * (cur[k] - prev[k]);
      flux_sum += std::sqrt(d);
    }
    std::swap(prev, cur);

    double best = 0.0;
    for (std::size_t lag = min_lag; lag <= max_lag; ++lag) {
      double xy = 0.0, xx = 0.0, yy = 0.0;
      for (std::size_t i = 0; i + lag < frame; ++i) {
        xy += x[i] * x[i + lag];
        xx += x[i] * x[i];
        yy += x[i + lag] * x[i + lag];
      }
      if (xx > 0.0 && yy > 0.0) best = std::max(best, xy / std::sqrt(xx * yy));
    }
    harmonic_sum += std::clamp(best, 0.0, 1.0);
  }
  if (voiced == 0) throw InvalidArgument("acoustic_features: silent audio");
  out.spectral_centroid /= static_cast<double>(voiced);
  out.spectral_skewness /= static_cast<double>(voiced);
  out.spectral_kurtosis /= static_cast<double>(voiced);
  out.spectral_flux = flux_sum / static_cast<double>(n_frames - 1);
  out.harmonic_ratio = harmonic_sum / static_cast<double>(n_frames);
  return out;
}

struct FeatureTest {
  std::string feature;
  StatResult stat;
  std::size_t n_good = 0;
  std::size_t n_poor = 0;
};

// Good (J > j_good) vs Poor (J < j_poor) groups, compared per feature on the
// absolute within-pair difference |f(stimulus) - f(target)|.
inline std::vector<FeatureTest> compare_good_poor(const std::vector<SelectionItem>& scored,
                                                  const std::map<std::string, AcousticFeatures>& features,
                                                  double j_good = 0.5, double j_poor = 0.1,
                                                  VarianceModel model = VarianceModel::kPooled) {
  auto lookup = [&](const std::string& w) -> const AcousticFeatures& {
    auto it = features.find(w);
    if (it == features.end()) throw InvalidArgument("no acoustic features for '" + w + "'");
    return it->second;
  };
  std::array<std::vector<double>, 5> good, poor;
  for (const auto& item : scored) {
    const double j = item.score.j.value();
    const bool is_good = j > j_good, is_poor = j < j_poor;
    if (!is_good && !is_poor) continue;
    const auto& fs = lookup(item.stimulus);
    const auto& ft = lookup(item.target);
    for (std::size_t i = 0; i < 5; ++i) {
      const double d = std::fabs(feature_value(fs, i) - feature_value(ft, i));
      (is_good ? good : poor)[i].push_back(d);
    }
  }
  if (good[0].empty()) throw InvalidArgument("no pairs with J > " + util::format_double(j_good));
  if (poor[0].empty()) throw InvalidArgument("no pairs with J < " + util::format_double(j_poor));
  std::vector<FeatureTest> out;
  for (std::size_t i = 0; i < 5; ++i)
    out.push_back({kFeatureNames[i], ttest2(good[i], poor[i], model), good[i].size(), poor[i].size()});
  return out;
}

inline void write_sii_csv(std::ostream& os, const std::vector<std::pair<std::string, SiiResult>>& rows) {
  os << "word,sii_normal,sii_impaired,delta\n";
  for (const auto& [w, r] : rows)
    os << w << ',' << util::format_double(r.sii_normal) << ',' << util::format_double(r.sii_impaired) << ','
       << util::format_double(r.delta) << '\n';
}

inline void write_feature_tests_csv(std::ostream& os, const std::vector<FeatureTest>& rows) {
  os << "feature,t,p,df,n_good,n_poor\n";
  for (const auto& r : rows)
    os << r.feature << ',' << util::format_double(r.stat.statistic) << ',' << util::format_double(r.stat.p_value)
       << ',' << util::format_double(r.stat.df) << ',' << r.n_good << ',' << r.n_poor << '\n';
}

}  // namespace pairsim

#endif  // PAIRSIM_ANALYSIS_HPP_
