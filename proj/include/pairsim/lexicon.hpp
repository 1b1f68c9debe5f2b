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

// Pronouncing-dictionary ingestion and minimal-pair mining.
//
// The dictionary reader accepts both the classic CMU layout
// ("SEALING  S IY1 L IH0 NG", ";;;" comments, "READ(1)" variants) and the
// lowercase layout with trailing "# comment" annotations. Stress is dropped
// on load and never consulted again.

#ifndef PAIRSIM_LEXICON_HPP_
#define PAIRSIM_LEXICON_HPP_

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "pairsim/common.hpp"
#include "pairsim/phoneme.hpp"

namespace pairsim {

class OovError : public Error {
 public:
  explicit OovError(std::string word)
      : Error("out-of-vocabulary word '" + word + "'"), word_(std::move(word)) {}
  const std::string& word() const noexcept { return word_; }

 private:
  std::string word_;
};

struct LexEntry {
  std::string word;
  std::vector<PhonemeSeq> prons;  // primary first, never empty

  friend bool operator==(const LexEntry&, const LexEntry&) = default;
};

// [a-z][a-z'-]*
inline bool is_lexicon_word(std::string_view w) {
  if (w.empty() || w[0] < 'a' || w[0] > 'z') return false;
  return std::all_of(w.begin() + 1, w.end(),
                     [](char c) { return (c >= 'a' && c <= 'z') || c == '\'' || c == '-'; });
}

struct ParseDiagnostic {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct DictParseResult {
  std::vector<LexEntry> entries;
  std::vector<ParseDiagnostic> diagnostics;
  std::size_t malformed_lines = 0;
  std::size_t filtered_words = 0;  // failed the alphabet filter
};

inline DictParseResult parse_cmu_dict(std::string_view text) {
  DictParseResult out;
  std::unordered_map<std::string, std::size_t> index;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;

    if (line.starts_with(";;;")) continue;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = util::trim(line);
    if (line.empty()) continue;

    auto tokens = util::split_ws(line);
    std::string_view head = tokens.front();
    if (head.size() > 3 && head.back() == ')') {
      if (auto open = head.rfind('('); open != std::string_view::npos && open > 0) {
        auto digits = head.substr(open + 1, head.size() - open - 2);
        if (!digits.empty() && std::all_of(digits.begin(), digits.end(),
                                           [](char c) { return c >= '0' && c <= '9'; }))
          head = head.substr(0, open);
      }
    }
    if (tokens.size() < 2) {
      out.diagnostics.push_back({line_no, "no phoneme tokens"});
      ++out.malformed_lines;
      continue;
    }
    PhonemeSeq pron;
    pron.reserve(tokens.size() - 1);
    bool ok = true;
    for (std::size_t i = 1; i < tokens.size(); ++i) {
      auto p = parse_phoneme_token(tokens[i]);
      if (!p) {
        out.diagnostics.push_back(
            {line_no, "unknown phoneme symbol '" + std::string(tokens[i]) + "'"});
        ok = false;
        break;
      }
      pron.push_back(*p);
    }
    if (!ok) {
      ++out.malformed_lines;
      continue;
    }
    std::string word = util::to_lower(head);
    if (!is_lexicon_word(word)) {
      ++out.filtered_words;
      continue;
    }
    auto [it, inserted] = index.try_emplace(word, out.entries.size());
    if (inserted) {
      out.entries.push_back({std::move(word), {std::move(pron)}});
    } else {
      auto& prons = out.entries[it->second].prons;
      // Variants that only differed in stress collapse to one pronunciation.
      if (std::find(prons.begin(), prons.end(), pron) == prons.end())
        prons.push_back(std::move(pron));
    }
  }
  return out;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline DictParseResult load_cmu_dict(const std::string& path) {
  return parse_cmu_dict(read_text_file(path));
}

// Immutable word -> pronunciations table; safe for concurrent reads.
class Lexicon {
 public:
  Lexicon() = default;
  explicit Lexicon(std::vector<LexEntry> entries) : entries_(std::move(entries)) {
    index_.reserve(entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].prons.empty())
        throw InvalidArgument("entry '" + entries_[i].word + "' has no pronunciation");
      for (const auto& p : entries_[i].prons)
        if (p.empty()) throw InvalidArgument("entry '" + entries_[i].word + "' has an empty pronunciation");
      if (!index_.try_emplace(entries_[i].word, i).second)
        throw InvalidArgument("duplicate lexicon word '" + entries_[i].word + "'");
    }
  }

  const std::vector<LexEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  const LexEntry* find(std::string_view word) const {
    auto it = index_.find(util::to_lower(util::trim(word)));
    return it == index_.end() ? nullptr : &entries_[it->second];
  }

  bool contains(std::string_view word) const { return find(word) != nullptr; }

  // All pronunciations, primary first. Throws OovError.
  const std::vector<PhonemeSeq>& lookup(std::string_view word) const {
    const LexEntry* e = find(word);
    if (!e) throw OovError(std::string(word));
    return e->prons;
  }

 private:
  std::vector<LexEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct FilterRules {
  std::size_t min_word_len = 0;
  std::size_t max_word_len = 0;  // 0 = unbounded
  std::size_t min_pron_len = 0;
  std::size_t max_pron_len = 0;  // 0 = unbounded
  bool allow_apostrophe = true;
  bool allow_hyphen = true;
  std::unordered_set<std::string> denylist;
};

// Pronunciations outside the length bounds are dropped; an entry survives
// while at least one pronunciation does. Order is preserved.
inline std::vector<LexEntry> filter_lexicon(const std::vector<LexEntry>& entries,
                                            const FilterRules& rules) {
  std::vector<LexEntry> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    const auto n = e.word.size();
    if (n < rules.min_word_len) continue;
    if (rules.max_word_len && n > rules.max_word_len) continue;
    if (!rules.allow_apostrophe && e.word.find('\'') != std::string::npos) continue;
    if (!rules.allow_hyphen && e.word.find('-') != std::string::npos) continue;
    if (rules.denylist.contains(e.word)) continue;
    LexEntry kept{e.word, {}};
    for (const auto& p : e.prons) {
      if (p.size() < rules.min_pron_len) continue;
      if (rules.max_pron_len && p.size() > rules.max_pron_len) continue;
      kept.prons.push_back(p);
    }
    if (!kept.prons.empty()) out.push_back(std::move(kept));
  }
  return out;
}

struct SubstitutionPattern {
  Phoneme from = Phoneme::AA;
  Phoneme to = Phoneme::AA;
  std::uint64_t count = 0;

  bool same_change(const SubstitutionPattern& o) const { return from == o.from && to == o.to; }
  friend bool operator==(const SubstitutionPattern&, const SubstitutionPattern&) = default;
};

inline SubstitutionPattern make_pattern(Phoneme from, Phoneme to, std::uint64_t count = 0) {
  if (from == to) throw InvalidArgument("substitution pattern needs distinct phonemes");
  return {from, to, count};
}

// "S->F"
inline std::string to_string(const SubstitutionPattern& p) {
  return std::string(symbol(p.from)) + "->" + std::string(symbol(p.to));
}

// Accepts "S->F", "S>F", "S → F", "S F".
inline SubstitutionPattern parse_pattern(std::string_view text) {
  std::string s(text);
  for (std::string_view arrow : {"\xE2\x86\x92", "->", ">"}) {
    for (auto at = s.find(arrow); at != std::string::npos; at = s.find(arrow))
      s.replace(at, arrow.size(), " ");
  }
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  auto toks = util::split_ws(s);
  if (toks.size() != 2) throw InvalidArgument("malformed substitution pattern '" + std::string(text) + "'");
  return make_pattern(make_phoneme(toks[0]), make_phoneme(toks[1]));
}

struct MinimalPair {
  std::string stimulus;
  std::string confusion;
  PhonemeSeq stimulus_pron;
  PhonemeSeq confusion_pron;
  std::size_t position = 0;
  SubstitutionPattern pattern;  // count unused
  std::size_t stimulus_variant = 0;
  std::size_t confusion_variant = 0;

  // Stable identifier used in file names and URLs.
  std::string id() const { return stimulus + "~" + confusion; }

  friend bool operator==(const MinimalPair&, const MinimalPair&) = default;
};

inline bool is_valid_minimal_pair(const MinimalPair& mp) {
  if (mp.stimulus == mp.confusion) return false;
  if (mp.stimulus_pron.size() != mp.confusion_pron.size()) return false;
  if (mp.pattern.from == mp.pattern.to) return false;
  std::size_t diffs = 0;
  for (std::size_t i = 0; i < mp.stimulus_pron.size(); ++i)
    if (mp.stimulus_pron[i] != mp.confusion_pron[i]) ++diffs;
  return diffs == 1 && mp.position < mp.stimulus_pron.size() &&
         mp.stimulus_pron[mp.position] == mp.pattern.from &&
         mp.confusion_pron[mp.position] == mp.pattern.to;
}

// Direction-swapped reading of the same pair.
inline MinimalPair reversed(const MinimalPair& mp) {
  return {mp.confusion,      mp.stimulus,          mp.confusion_pron,   mp.stimulus_pron,
          mp.position,       {mp.pattern.to, mp.pattern.from, 0},
          mp.confusion_variant, mp.stimulus_variant};
}

namespace detail {

inline constexpr char kHole = static_cast<char>(kPhonemeCount);

struct MineSlot {
  std::uint32_t entry;
  std::uint32_t variant;
  Phoneme phoneme;
  std::uint16_t position;
};

}  // namespace detail

// Every ordered (stimulus, confusion) pair exemplifying one of `patterns`.
// Pronunciations are bucketed by a key with one position wildcarded; two
// pronunciations that share a bucket differ in exactly that position, so
// the search is O(n * L) instead of comparing all pairs.
inline std::vector<MinimalPair> mine_minimal_pairs(const Lexicon& lex,
                                                   const std::vector<SubstitutionPattern>& patterns) {
  if (patterns.empty()) throw InvalidArgument("mine_minimal_pairs: no patterns");
  std::vector<SubstitutionPattern> pats;
  for (const auto& p : patterns) {
    if (p.from == p.to) throw InvalidArgument("pattern with identical phonemes");
    if (std::none_of(pats.begin(), pats.end(), [&](const auto& q) { return q.same_change(p); }))
      pats.push_back({p.from, p.to, 0});
  }
  std::array<bool, kPhonemeCount> relevant{};
  for (const auto& p : pats) relevant[index_of(p.from)] = relevant[index_of(p.to)] = true;

  std::unordered_map<std::string, std::vector<detail::MineSlot>> buckets;
  const auto& entries = lex.entries();
  std::string key;
  for (std::size_t e = 0; e < entries.size(); ++e) {
    for (std::size_t v = 0; v < entries[e].prons.size(); ++v) {
      const auto& pron = entries[e].prons[v];
      key.assign(pron.size(), '\0');
      for (std::size_t i = 0; i < pron.size(); ++i) key[i] = static_cast<char>(pron[i]);
      for (std::size_t i = 0; i < pron.size(); ++i) {
        if (!relevant[index_of(pron[i])]) continue;
        key[i] = detail::kHole;
        buckets[key].push_back({static_cast<std::uint32_t>(e), static_cast<std::uint32_t>(v), pron[i],
                                static_cast<std::uint16_t>(i)});
        key[i] = static_cast<char>(pron[i]);
      }
    }
  }

  struct Hit {
    std::size_t pattern;
    detail::MineSlot stim, conf;
  };
  std::vector<Hit> hits;
  for (const auto& [k, slots] : buckets) {
    if (slots.size() < 2) continue;
    for (std::size_t pi = 0; pi < pats.size(); ++pi) {
      for (const auto& a : slots) {
        if (a.phoneme != pats[pi].from) continue;
        for (const auto& b : slots) {
          if (b.phoneme != pats[pi].to || b.entry == a.entry) continue;
          hits.push_back({pi, a, b});
        }
      }
    }
  }

  auto rank = [&](const Hit& h) {
    return std::tie(h.pattern, entries[h.stim.entry].word, entries[h.conf.entry].word, h.stim.position,
                    h.stim.variant, h.conf.variant);
  };
  std::sort(hits.begin(), hits.end(), [&](const Hit& x, const Hit& y) { return rank(x) < rank(y); });

  std::vector<MinimalPair> out;
  out.reserve(hits.size());
  for (const auto& h : hits) {
    const auto& s = entries[h.stim.entry];
    const auto& c = entries[h.conf.entry];
    out.push_back({s.word, c.word, s.prons[h.stim.variant], c.prons[h.conf.variant], h.stim.position,
                   pats[h.pattern], h.stim.variant, h.conf.variant});
  }
  return out;
}

}  // namespace pairsim

#endif  // PAIRSIM_LEXICON_HPP_
