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

// Confusion harvest, substitution ranking and single-pass pair screening.

#ifndef PAIRSIM_PIPELINE_HPP_
#define PAIRSIM_PIPELINE_HPP_

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pairsim/lexicon.hpp"
#include "pairsim/listeners.hpp"
#include "pairsim/parallel.hpp"
#include "pairsim/phonalign.hpp"
#include "pairsim/rng.hpp"

namespace pairsim {

struct ConfusionRecord {
  std::string stimulus_word;
  std::string nh_output;
  std::string hi_output;
  PhonemeSeq stimulus_pron;
  std::optional<PhonemeSeq> hi_pron;
  std::optional<EditOps> alignment;  // stimulus vs HI output
  std::uint64_t trial_seed = 0;

  friend bool operator==(const ConfusionRecord&, const ConfusionRecord&) = default;
};

struct WordFailure {
  std::string word;
  std::string error;
};

struct HarvestResult {
  std::vector<ConfusionRecord> records;  // mismatches only, input word order
  std::vector<WordFailure> skipped;
  // Stimulus-vs-output alignments for every decodable trial, for the
  // listener-level error analysis.
  std::vector<EditOps> hi_alignments;
  std::vector<EditOps> nh_alignments;
  std::size_t words_processed = 0;
};

// One HI pass per word (plus NH for reference). A record is kept only when
// the HI transcript differs from the word. Failures skip the word.
inline HarvestResult harvest_confusions(const ListenerContext& ctx, const std::vector<std::string>& words,
                                        const ListenerSpec& nh, const ListenerSpec& hi, std::uint64_t seed,
                                        std::size_t jobs = 1) {
  nh.validate();
  hi.validate();
  struct Slot {
    std::optional<ConfusionRecord> record;
    std::optional<EditOps> hi_align, nh_align;
    std::optional<std::string> error;
  };
  std::vector<Slot> slots(words.size());
  parallel_for(words.size(), jobs, [&](std::size_t i) {
    const std::string& word = words[i];
    try {
      const auto& stim = ctx.lexicon->lookup(word).front();
      const auto hi_seed = trial_seed(seed, word, "harvest/" + hi.name, 0);
      const auto nh_seed = trial_seed(seed, word, "harvest/" + nh.name, 0);
      const auto hi_res = simulate_listener(ctx, word, hi, hi_seed);
      const auto nh_res = simulate_listener(ctx, word, nh, nh_seed);
      if (hi_res.phonemes) slots[i].hi_align = align(stim, *hi_res.phonemes);
      if (nh_res.phonemes) slots[i].nh_align = align(stim, *nh_res.phonemes);
      if (!reproduces(hi_res, word)) {
        slots[i].record = ConfusionRecord{util::to_lower(word), nh_res.raw_transcript, hi_res.raw_transcript,
                                          stim, hi_res.phonemes, slots[i].hi_align, hi_seed};
      }
    } catch (const std::exception& e) {
      slots[i].error = e.what();
    }
  });
  HarvestResult out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    auto& s = slots[i];
    if (s.error) {
      out.skipped.push_back({words[i], *s.error});
      continue;
    }
    ++out.words_processed;
    if (s.hi_align) out.hi_alignments.push_back(std::move(*s.hi_align));
    if (s.nh_align) out.nh_alignments.push_back(std::move(*s.nh_align));
    if (s.record) out.records.push_back(std::move(*s.record));
  }
  return out;
}

// Substitutions across all records, most frequent first; ties by (from, to).
inline std::vector<SubstitutionPattern> rank_patterns(const std::vector<ConfusionRecord>& records) {
  OpTally t;
  for (const auto& r : records) {
    if (r.alignment) {
      t.add(*r.alignment);
    } else if (r.hi_pron) {
      t.add(align(r.stimulus_pron, *r.hi_pron));
    }
  }
  std::vector<SubstitutionPattern> out;
  if (t.substitutions.empty()) return out;
  for (const auto& op : top_k(t, OpKind::kSubstitution, t.substitutions.size()))
    out.push_back({op.from, *op.to, op.count});
  return out;
}

struct ValidationVerdict {
  MinimalPair pair;  // read in its own direction: stimulus -> confusion
  bool nh_correct = false;
  bool hi_confused = false;
  std::string nh_output;
  std::string hi_output;

  bool validated() const { return nh_correct && hi_confused; }
};

struct ValidationRun {
  std::vector<ValidationVerdict> verdicts;  // input pair order
  std::vector<WordFailure> skipped;         // word = pair id
};

// Screening pass: validated iff NH reproduces the stimulus and HI outputs
// exactly the confusion word. With trials > 1 each flag needs a strict
// majority of trials. Pairs whose simulation fails are skipped and listed.
inline ValidationRun validate_pairs(const ListenerContext& ctx, const std::vector<MinimalPair>& pairs,
                                    const ListenerSpec& nh, const ListenerSpec& hi, std::uint64_t seed,
                                    std::size_t trials = 1, std::size_t jobs = 1) {
  nh.validate();
  hi.validate();
  if (trials == 0) throw InvalidArgument("validate_pairs: trials must be >= 1");
  for (const auto& p : pairs)
    if (!is_valid_minimal_pair(p)) throw InvalidArgument("malformed minimal pair " + p.id());
  std::vector<std::optional<ValidationVerdict>> slots(pairs.size());
  std::vector<std::string> errors(pairs.size());
  parallel_for(pairs.size(), jobs, [&](std::size_t i) {
    const auto& p = pairs[i];
    try {
      std::size_t nh_ok = 0, hi_ok = 0;
      ListenerResult nh_last, hi_last;
      const std::string tag = "/" + p.confusion;
      for (std::size_t t = 0; t < trials; ++t) {
        nh_last = simulate_listener(ctx, p.stimulus, nh,
                                    trial_seed(seed, p.stimulus, "validate/" + nh.name + tag, t), p.stimulus_variant);
        hi_last = simulate_listener(ctx, p.stimulus, hi,
                                    trial_seed(seed, p.stimulus, "validate/" + hi.name + tag, t), p.stimulus_variant);
        if (reproduces(nh_last, p.stimulus)) ++nh_ok;
        if (reproduces(hi_last, p.confusion)) ++hi_ok;
      }
      slots[i] = ValidationVerdict{p, 2 * nh_ok > trials, 2 * hi_ok > trials, nh_last.raw_transcript,
                                   hi_last.raw_transcript};
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  ValidationRun out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (slots[i]) {
      out.verdicts.push_back(std::move(*slots[i]));
    } else {
      out.skipped.push_back({pairs[i].id(), errors[i]});
    }
  }
  return out;
}

inline void write_verdicts_csv(std::ostream& os, const std::vector<ValidationVerdict>& v) {
  os << "stimulus,confusion,direction,nh_correct,hi_confused,validated\n";
  for (const auto& x : v)
    os << x.pair.stimulus << ',' << x.pair.confusion << ',' << to_string(x.pair.pattern) << ','
       << (x.nh_correct ? "true" : "false") << ',' << (x.hi_confused ? "true" : "false") << ','
       << (x.validated() ? "true" : "false") << '\n';
}

}  // namespace pairsim

#endif  // PAIRSIM_PIPELINE_HPP_
