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

// Mono audio buffers, PCM16 WAV I/O and rational resampling.

#ifndef PAIRSIM_AUDIO_HPP_
#define PAIRSIM_AUDIO_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>
#include <vector>

#include "pairsim/common.hpp"

namespace pairsim {

inline constexpr int kDefaultSampleRate = 16000;

struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate = kDefaultSampleRate;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }

  friend bool operator==(const AudioBuffer&, const AudioBuffer&) = default;
};

inline void check_audio(const AudioBuffer& a) {
  if (a.sample_rate <= 0) throw InvalidArgument("sample rate must be positive");
  for (double s : a.samples)
    if (!std::isfinite(s)) throw InvalidArgument("audio contains non-finite samples");
}

inline double rms(const AudioBuffer& a) {
  if (a.empty()) throw InvalidArgument("rms of empty audio");
  long double acc = 0.0L;
  for (double s : a.samples) acc += static_cast<long double>(s) * s;
  return static_cast<double>(std::sqrt(acc / a.samples.size()));
}

// Windowed-sinc polyphase resampler for a rational ratio up/down.
inline std::vector<double> resample(const std::vector<double>& x, int from_rate, int to_rate) {
  if (from_rate <= 0 || to_rate <= 0) throw InvalidArgument("resample: bad rate");
  if (from_rate == to_rate || x.empty()) return x;
  const int g = std::gcd(from_rate, to_rate);
  const long up = to_rate / g, down = from_rate / g;
  constexpr int kHalfTaps = 16;  // per phase, each side
  const double cutoff = 0.5 / std::max(up, down);  // normalized to the upsampled rate
  const long half = kHalfTaps * std::max(up, down);
  std::vector<double> h(2 * half + 1);
  constexpr double kPi = 3.14159265358979323846;
  for (long n = -half; n <= half; ++n) {
    const double t = static_cast<double>(n);
    const double sinc = n == 0 ? 2.0 * cutoff : std::sin(2.0 * kPi * cutoff * t) / (kPi * t);
    const double win = 0.5 * (1.0 + std::cos(kPi * t / (half + 1)));  // Hann
    h[n + half] = sinc * win * up;
  }
  const std::size_t out_len =
      static_cast<std::size_t>((static_cast<long>(x.size()) * up + down - 1) / down);
  std::vector<double> y(out_len);
  for (std::size_t m = 0; m < out_len; ++m) {
    const long pos = static_cast<long>(m) * down;  // index on the upsampled grid
    // Upsampled sample k is nonzero only when k % up == 0.
    long k0 = pos - half;
    long first = k0 <= 0 ? 0 : (k0 + up - 1) / up;
    long last = (pos + half) / up;
    if (last >= static_cast<long>(x.size())) last = static_cast<long>(x.size()) - 1;
    double acc = 0.0;
    for (long i = first; i <= last; ++i) acc += x[i] * h[pos - i * up + half];
    y[m] = acc;
  }
  return y;
}

namespace detail {

inline void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}
inline std::uint32_t get_u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace detail

// Clamped, rounded 16-bit quantization.
inline std::vector<std::int16_t> to_pcm16(const std::vector<double>& x) {
  std::vector<std::int16_t> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double v = std::round(x[i] * 32768.0);
    v = std::clamp(v, -32768.0, 32767.0);
    out[i] = static_cast<std::int16_t>(v);
  }
  return out;
}

inline std::vector<double> from_pcm16(const std::vector<std::int16_t>& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] / 32768.0;
  return out;
}

inline std::string encode_wav(const AudioBuffer& a) {
  const auto pcm = to_pcm16(a.samples);
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(pcm.size() * 2);
  std::string s;
  s.reserve(44 + data_bytes);
  s += "RIFF";
  detail::put_u32(s, 36 + data_bytes);
  s += "WAVEfmt ";
  detail::put_u32(s, 16);
  detail::put_u16(s, 1);  // PCM
  detail::put_u16(s, 1);  // mono
  detail::put_u32(s, static_cast<std::uint32_t>(a.sample_rate));
  detail::put_u32(s, static_cast<std::uint32_t>(a.sample_rate) * 2);
  detail::put_u16(s, 2);
  detail::put_u16(s, 16);
  s += "data";
  detail::put_u32(s, data_bytes);
  for (auto v : pcm) detail::put_u16(s, static_cast<std::uint16_t>(v));
  return s;
}

// PCM16 only. Multi-channel input is averaged to mono; the result is
// resampled to `target_rate` (0 keeps the file's rate).
inline AudioBuffer decode_wav(const std::string& bytes, int target_rate = kDefaultSampleRate) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
    throw InvalidArgument("not a RIFF/WAVE file");
  std::size_t off = 12;
  int channels = 0, rate = 0, bits = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  while (off + 8 <= bytes.size()) {
    const std::uint32_t len = detail::get_u32(p + off + 4);
    const unsigned char* body = p + off + 8;
    if (off + 8 + len > bytes.size()) throw InvalidArgument("truncated WAV chunk");
    if (std::memcmp(p + off, "fmt ", 4) == 0) {
      if (len < 16) throw InvalidArgument("short fmt chunk");
      if (detail::get_u16(body) != 1) throw InvalidArgument("only PCM WAV is supported");
      channels = detail::get_u16(body + 2);
      rate = static_cast<int>(detail::get_u32(body + 4));
      bits = detail::get_u16(body + 14);
    } else if (std::memcmp(p + off, "data", 4) == 0) {
      data = body;
      data_len = len;
    }
    off += 8 + len + (len & 1);
  }
  if (!data || channels <= 0 || rate <= 0) throw InvalidArgument("WAV lacks fmt or data chunk");
  if (bits != 16) throw InvalidArgument("only 16-bit WAV is supported");
  const std::size_t frames = data_len / (2 * static_cast<std::size_t>(channels));
  std::vector<double> mono(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c)
      acc += static_cast<std::int16_t>(detail::get_u16(data + 2 * (f * channels + c))) / 32768.0;
    mono[f] = acc / channels;
  }
  AudioBuffer out{std::move(mono), rate};
  if (target_rate > 0 && target_rate != rate) {
    out.samples = resample(out.samples, rate, target_rate);
    out.sample_rate = target_rate;
  }
  return out;
}

inline AudioBuffer read_wav(const std::string& path, int target_rate = kDefaultSampleRate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_wav(bytes, target_rate);
}

inline void write_wav(const std::string& path, const AudioBuffer& a) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  const auto bytes = encode_wav(a);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace pairsim

#endif  // PAIRSIM_AUDIO_HPP_
