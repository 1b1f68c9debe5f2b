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

// Simulated listeners.
//
// A listener turns a word into a transcript. Two recognizer backends exist:
//   * an external ASR adapter fed with TTS audio passed through the
//     degradation channel (audio mode);
//   * a seeded phoneme confusion channel that perturbs the pronunciation
//     directly (phoneme-domain mode), fully offline and deterministic.

#ifndef PAIRSIM_LISTENERS_HPP_
#define PAIRSIM_LISTENERS_HPP_

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "pairsim/adapter.hpp"
#include "pairsim/common.hpp"
#include "pairsim/hearing_dsp.hpp"
#include "pairsim/lexicon.hpp"
#include "pairsim/phonalign.hpp"
#include "pairsim/phoneme.hpp"
#include "pairsim/rng.hpp"

namespace pairsim {

struct ChannelParams {
  std::map<PhonemePair, double> sub_probs;
  std::array<double, kPhonemeCount> del_probs{};
  double ins_prob = 0.0;  // per boundary, n + 1 boundaries
  std::array<double, kPhonemeCount> ins_dist{};
  bool decode_to_lexicon = true;

  friend bool operator==(const ChannelParams&, const ChannelParams&) = default;

  double sub_prob(Phoneme from, Phoneme to) const {
    auto it = sub_probs.find({from, to});
    return it == sub_probs.end() ? 0.0 : it->second;
  }

  // Deletion plus all substitutions out of `p`.
  double event_prob(Phoneme p) const {
    double total = del_probs[index_of(p)];
    for (const auto& [k, v] : sub_probs)
      if (k.first == p) total += v;
    return total;
  }

  void validate() const {
    auto prob = [](double v) { return v >= 0.0 && v <= 1.0; };
    for (const auto& [k, v] : sub_probs) {
      if (!prob(v)) throw InvalidArgument("substitution probability outside [0,1]");
      if (k.first == k.second) throw InvalidArgument("self-substitution in channel params");
    }
    for (double v : del_probs)
      if (!prob(v)) throw InvalidArgument("deletion probability outside [0,1]");
    if (!prob(ins_prob)) throw InvalidArgument("insertion probability outside [0,1]");
    for (std::size_t i = 0; i < kPhonemeCount; ++i)
      if (event_prob(static_cast<Phoneme>(i)) > 1.0 + 1e-12)
        throw InvalidArgument("event probability for " + std::string(kPhonemeSymbols[i]) + " exceeds 1");
    double s = 0.0;
    for (double v : ins_dist) {
      if (!prob(v)) throw InvalidArgument("insertion distribution entry outside [0,1]");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-9) throw InvalidArgument("insertion distribution must sum to 1");
  }

  bool is_zero() const {
    if (ins_prob != 0.0) return false;
    for (double v : del_probs)
      if (v != 0.0) return false;
    for (const auto& [k, v] : sub_probs)
      if (v != 0.0) return false;
    return true;
  }
};

// Insertion symbol distribution used by every channel: short neutral vowels
// and a few common consonants.
inline std::array<double, kPhonemeCount> default_insertion_distribution() {
  std::array<double, kPhonemeCount> d{};
  d[index_of(Phoneme::IH)] = 0.30;
  d[index_of(Phoneme::AH)] = 0.30;
  d[index_of(Phoneme::N)] = 0.15;
  d[index_of(Phoneme::HH)] = 0.15;
  d[index_of(Phoneme::G)] = 0.10;
  return d;
}

inline ChannelParams zero_channel() {
  ChannelParams p;
  p.ins_dist = default_insertion_distribution();
  return p;
}

namespace severity {

// Relative weights of the voicing/manner confusions the channel produces.
// Ordered so that S->F, T->D, D->T, CH->T, B->P dominate.
struct WeightedSub {
  Phoneme from, to;
  double weight;
};
inline constexpr std::array<WeightedSub, 20> kSubstitutionTable = {{
    {Phoneme::S, Phoneme::F, 1.00},  {Phoneme::T, Phoneme::D, 0.90},  {Phoneme::D, Phoneme::T, 0.85},
    {Phoneme::CH, Phoneme::T, 0.80}, {Phoneme::B, Phoneme::P, 0.75},  {Phoneme::P, Phoneme::B, 0.70},
    {Phoneme::K, Phoneme::G, 0.60},  {Phoneme::P, Phoneme::K, 0.55},  {Phoneme::F, Phoneme::S, 0.45},
    {Phoneme::TH, Phoneme::F, 0.45}, {Phoneme::SH, Phoneme::S, 0.40}, {Phoneme::T, Phoneme::CH, 0.35},
    {Phoneme::K, Phoneme::P, 0.35},  {Phoneme::JH, Phoneme::D, 0.30}, {Phoneme::G, Phoneme::K, 0.30},
    {Phoneme::F, Phoneme::TH, 0.30}, {Phoneme::S, Phoneme::Z, 0.25},  {Phoneme::T, Phoneme::S, 0.25},
    {Phoneme::Z, Phoneme::S, 0.25},  {Phoneme::B, Phoneme::K, 0.20},
}};

inline constexpr std::array<Phoneme, 6> kHighFrequencyConsonants = {
    Phoneme::S, Phoneme::F, Phoneme::T, Phoneme::K, Phoneme::TH, Phoneme::SH};

inline constexpr double kSubScale = 0.40;
inline constexpr double kHfDeletion = 0.30;
inline constexpr double kOtherDeletion = 0.05;
inline constexpr double kInsertion = 0.02;
inline constexpr double kFullLossDb = 85.0;

struct Drivers {
  double high_freq_loss;  // [0,1]
  double low_freq_loss;   // [0,1]
  double noise;           // [0,1], 0 for no noise
  double hf_severity;     // combined, drives HF deletions and substitutions
  double general_severity;
};

inline Drivers drivers(const DegradationSpec& spec) {
  auto mean_att = [&](std::initializer_list<double> freqs) {
    double s = 0.0;
    for (double f : freqs) s += spec.profile.attenuation_at(f);
    return s / static_cast<double>(freqs.size());
  };
  Drivers d{};
  d.high_freq_loss = std::clamp(mean_att({2000, 3000, 4000, 6000}) / kFullLossDb, 0.0, 1.0);
  d.low_freq_loss = std::clamp(mean_att({250, 500, 1000}) / kFullLossDb, 0.0, 1.0);
  d.noise = spec.noiseless() ? 0.0 : std::clamp(std::pow(10.0, -spec.snr_db / 20.0), 0.0, 1.0);
  d.hf_severity = 1.0 - (1.0 - d.high_freq_loss) * (1.0 - d.noise);
  d.general_severity =
      1.0 - (1.0 - d.low_freq_loss) * (1.0 - 0.5 * d.high_freq_loss) * (1.0 - 0.5 * d.noise);
  return d;
}

}  // namespace severity

// Monotone map from the acoustic channel to confusion-channel parameters.
// More high-frequency attenuation or less SNR never lowers any probability;
// a flat zero profile without noise gives the identity channel.
inline ChannelParams severity_map(const DegradationSpec& spec) {
  spec.validate();
  const auto d = severity::drivers(spec);
  ChannelParams p = zero_channel();
  for (const auto& s : severity::kSubstitutionTable)
    p.sub_probs[{s.from, s.to}] = severity::kSubScale * s.weight * d.hf_severity;
  for (std::size_t i = 0; i < kPhonemeCount; ++i) p.del_probs[i] = severity::kOtherDeletion * d.general_severity;
  for (Phoneme c : severity::kHighFrequencyConsonants)
    p.del_probs[index_of(c)] = severity::kHfDeletion * d.hf_severity;
  p.ins_prob = severity::kInsertion * d.general_severity;
  return p;
}

// Nearest-word decoder over a lexicon: smallest phoneme edit distance, ties
// to the alphabetically smallest word.
class LexiconDecoder {
 public:
  struct Match {
    std::string word;
    PhonemeSeq pron;
    std::size_t variant = 0;
    std::size_t distance = 0;
  };

  explicit LexiconDecoder(const Lexicon& lex) {
    std::vector<std::size_t> order(lex.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return lex.entries()[a].word < lex.entries()[b].word; });
    for (std::size_t r = 0; r < order.size(); ++r) {
      const auto& e = lex.entries()[order[r]];
      words_.push_back(e.word);
      for (std::size_t v = 0; v < e.prons.size(); ++v) {
        const auto& pron = e.prons[v];
        if (by_length_.size() <= pron.size()) by_length_.resize(pron.size() + 1);
        by_length_[pron.size()].push_back({r, v, pron});
        exact_.try_emplace(key(pron), Slot{r, v, pron});
      }
    }
  }

  Match nearest(const PhonemeSeq& seq) const {
    if (words_.empty()) throw InvalidArgument("decoder over an empty lexicon");
    if (auto it = exact_.find(key(seq)); it != exact_.end())
      return {words_[it->second.rank], it->second.pron, it->second.variant, 0};
    std::size_t best_dist = std::numeric_limits<std::size_t>::max();
    const Slot* best = nullptr;
    const std::size_t len = seq.size();
    for (std::size_t gap = 0;; ++gap) {
      if (gap > best_dist) break;
      const bool below = gap <= len, above = len + gap < by_length_.size();
      if (!below && !above) break;
      for (int side = 0; side < 2; ++side) {
        if (side == 1 && gap == 0) continue;
        const std::size_t L = side == 0 ? len - gap : len + gap;
        if ((side == 0 && !below) || (side == 1 && !above) || L >= by_length_.size()) continue;
        for (const auto& s : by_length_[L]) {
          const std::size_t dist = bounded_distance(seq, s.pron, best_dist);
          if (dist < best_dist || (dist == best_dist && best && s.rank < best->rank)) {
            best_dist = dist;
            best = &s;
          }
        }
      }
    }
    return {words_[best->rank], best->pron, best->variant, best_dist};
  }

 private:
  struct Slot {
    std::size_t rank;
    std::size_t variant;
    PhonemeSeq pron;
  };

  static std::string key(const PhonemeSeq& s) {
    std::string k(s.size(), '\0');
    for (std::size_t i = 0; i < s.size(); ++i) k[i] = static_cast<char>(s[i]);
    return k;
  }

  // Exact distance when it is <= limit, otherwise some value > limit.
  static std::size_t bounded_distance(const PhonemeSeq& a, const PhonemeSeq& b, std::size_t limit) {
    const std::size_t n = a.size(), m = b.size();
    std::vector<std::size_t> row(m + 1);
    for (std::size_t j = 0; j <= m; ++j) row[j] = j;
    for (std::size_t i = 1; i <= n; ++i) {
      std::size_t diag = row[0];
      row[0] = i;
      std::size_t row_min = row[0];
      for (std::size_t j = 1; j <= m; ++j) {
        const std::size_t up = row[j];
        row[j] = std::min({diag + (a[i - 1] == b[j - 1] ? 0 : 1), up + 1, row[j - 1] + 1});
        diag = up;
        row_min = std::min(row_min, row[j]);
      }
      if (row_min > limit) return row_min;
    }
    return row[m];
  }

  std::vector<std::string> words_;
  std::vector<std::vector<Slot>> by_length_;
  std::unordered_map<std::string, Slot> exact_;
};

struct ListenerResult {
  std::string raw_transcript;
  std::optional<PhonemeSeq> phonemes;  // absent when the transcript cannot be decoded
  std::uint64_t trial_seed = 0;
  std::size_t stimulus_variant = 0;

  friend bool operator==(const ListenerResult&, const ListenerResult&) = default;
};

// One draw per boundary for insertion and one categorical draw per phoneme
// over {delete, substitute to x..., keep}. Without a decoder the result is
// the raw perturbed sequence: its transcript is the input word when nothing
// changed and "/SYM SYM/" otherwise.
inline ListenerResult channel_transcribe(const PhonemeSeq& pron, const ChannelParams& params,
                                         std::uint64_t seed, const LexiconDecoder* decoder = nullptr,
                                         std::string_view stimulus_word = {}) {
  Rng rng(seed);
  std::array<std::vector<std::pair<Phoneme, double>>, kPhonemeCount> rows;
  for (const auto& [k, v] : params.sub_probs)
    if (v > 0.0) rows[index_of(k.first)].emplace_back(k.second, v);

  auto draw_insertion = [&](PhonemeSeq& out) {
    const double u = rng.uniform();
    if (params.ins_prob > 0.0 && u < params.ins_prob) {
      double v = rng.uniform(), acc = 0.0;
      for (std::size_t i = 0; i < kPhonemeCount; ++i) {
        acc += params.ins_dist[i];
        if (v < acc) {
          out.push_back(static_cast<Phoneme>(i));
          return;
        }
      }
      // Rounding left v above the cumulative sum: take the last non-zero symbol.
      for (std::size_t i = kPhonemeCount; i-- > 0;)
        if (params.ins_dist[i] > 0.0) {
          out.push_back(static_cast<Phoneme>(i));
          return;
        }
    }
  };

  PhonemeSeq out;
  out.reserve(pron.size() + 2);
  for (std::size_t i = 0; i <= pron.size(); ++i) {
    draw_insertion(out);
    if (i == pron.size()) break;
    const Phoneme p = pron[i];
    double u = rng.uniform();
    const double del = params.del_probs[index_of(p)];
    if (u < del) continue;
    u -= del;
    bool substituted = false;
    for (const auto& [to, prob] : rows[index_of(p)]) {
      if (u < prob) {
        out.push_back(to);
        substituted = true;
        break;
      }
      u -= prob;
    }
    if (!substituted) out.push_back(p);
  }

  ListenerResult r;
  r.trial_seed = seed;
  if (decoder && params.decode_to_lexicon) {
    auto m = decoder->nearest(out);
    r.raw_transcript = m.word;
    r.phonemes = std::move(m.pron);
    return r;
  }
  if (out == pron && !stimulus_word.empty()) {
    r.raw_transcript = std::string(stimulus_word);
  } else {
    r.raw_transcript = "/" + to_string(out) + "/";
  }
  if (!out.empty()) r.phonemes = std::move(out);
  return r;
}

struct AdapterRecognizer {
  std::string asr_id;
  friend bool operator==(const AdapterRecognizer&, const AdapterRecognizer&) = default;
};

struct ConfusionChannelRecognizer {
  std::optional<ChannelParams> params;  // absent: severity_map(degradation)
  bool decode_to_lexicon = true;
};

struct ListenerSpec {
  std::string name = "listener";             // condition tag used in seeds
  std::optional<std::string> tts;            // absent: phoneme-domain mode
  DegradationSpec degradation;
  std::variant<ConfusionChannelRecognizer, AdapterRecognizer> recognizer;

  bool phoneme_domain() const { return !tts.has_value(); }

  void validate() const {
    degradation.validate();
    if (phoneme_domain() && !std::holds_alternative<ConfusionChannelRecognizer>(recognizer))
      throw InvalidArgument("phoneme-domain listener requires a confusion-channel recognizer");
    if (!phoneme_domain() && !std::holds_alternative<AdapterRecognizer>(recognizer))
      throw InvalidArgument("audio listener requires an ASR adapter recognizer");
    if (auto* c = std::get_if<ConfusionChannelRecognizer>(&recognizer); c && c->params) c->params->validate();
  }

  ChannelParams channel_params() const {
    const auto& c = std::get<ConfusionChannelRecognizer>(recognizer);
    ChannelParams p = c.params ? *c.params : severity_map(degradation);
    p.decode_to_lexicon = c.decode_to_lexicon;
    return p;
  }
};

inline ListenerSpec phoneme_listener(std::string name, DegradationSpec degradation,
                                     std::optional<ChannelParams> params = std::nullopt) {
  ListenerSpec s;
  s.name = std::move(name);
  s.degradation = std::move(degradation);
  s.recognizer = ConfusionChannelRecognizer{std::move(params), true};
  return s;
}

inline ListenerSpec audio_listener(std::string name, std::string tts_id, std::string asr_id,
                                   DegradationSpec degradation) {
  ListenerSpec s;
  s.name = std::move(name);
  s.tts = std::move(tts_id);
  s.degradation = std::move(degradation);
  s.recognizer = AdapterRecognizer{std::move(asr_id)};
  return s;
}

// Space-delimited transcript -> concatenated primary pronunciations.
// nullopt when any token is out of vocabulary or the transcript is empty.
inline std::optional<PhonemeSeq> transcript_phonemes(const Lexicon& lex, std::string_view transcript) {
  PhonemeSeq out;
  bool any = false;
  for (auto tok : util::split_ws(transcript)) {
    std::string w = util::to_lower(tok);
    while (!w.empty() && !std::isalnum(static_cast<unsigned char>(w.back())) && w.back() != '\'') w.pop_back();
    while (!w.empty() && !std::isalnum(static_cast<unsigned char>(w.front()))) w.erase(w.begin());
    if (w.empty()) continue;
    const auto* e = lex.find(w);
    if (!e) return std::nullopt;
    out.insert(out.end(), e->prons.front().begin(), e->prons.front().end());
    any = true;
  }
  if (!any) return std::nullopt;
  return out;
}

// Everything a listener simulation may need besides its spec.
struct ListenerContext {
  const Lexicon* lexicon = nullptr;
  const LexiconDecoder* decoder = nullptr;
  AdapterRegistry* adapters = nullptr;
};

inline std::string transcribe_external(AdapterRegistry& adapters, const AudioBuffer& audio,
                                       const std::string& asr_id) {
  return adapters.get(asr_id).call([&](AdapterClient& c) { return c.transcribe(audio); });
}

// `variant` picks which pronunciation the channel is fed (phoneme-domain
// mode); it is recorded in the result.
inline ListenerResult simulate_listener(const ListenerContext& ctx, std::string_view word,
                                        const ListenerSpec& spec, std::uint64_t seed,
                                        std::size_t variant = 0) {
  if (!ctx.lexicon) throw InvalidArgument("simulate_listener: no lexicon");
  if (spec.phoneme_domain()) {
    const auto& prons = ctx.lexicon->lookup(word);
    if (variant >= prons.size()) throw InvalidArgument("pronunciation variant out of range");
    const auto params = spec.channel_params();
    auto r = channel_transcribe(prons[variant], params, seed, ctx.decoder, util::to_lower(word));
    r.stimulus_variant = variant;
    return r;
  }
  if (!ctx.adapters) throw InvalidArgument("audio listener without adapters");
  const auto& asr = std::get<AdapterRecognizer>(spec.recognizer);
  const AudioBuffer clean = ctx.adapters->synth_cached(*spec.tts, std::string(word));
  DegradationSpec deg = spec.degradation;
  deg.noise_seed = seed;
  const AudioBuffer heard = degrade(clean, deg);
  ListenerResult r;
  r.trial_seed = seed;
  r.stimulus_variant = variant;
  r.raw_transcript = transcribe_external(*ctx.adapters, heard, asr.asr_id);
  r.phonemes = transcript_phonemes(*ctx.lexicon, r.raw_transcript);
  return r;
}

// True when the listener reproduced `word` verbatim.
inline bool reproduces(const ListenerResult& r, std::string_view word) {
  return util::to_lower(util::trim(r.raw_transcript)) == util::to_lower(word);
}

}  // namespace pairsim

#endif  // PAIRSIM_LISTENERS_HPP_
