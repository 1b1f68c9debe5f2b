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

// ARPAbet phoneme inventory (39 symbols, stress-free) and phoneme sequences.

#ifndef PAIRSIM_PHONEME_HPP_
#define PAIRSIM_PHONEME_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pairsim/common.hpp"

namespace pairsim {

// Enumerators are in ARPAbet alphabetical order, so comparing enum values
// is the same as comparing symbols.
enum class Phoneme : std::uint8_t {
  AA, AE, AH, AO, AW, AY, B, CH, D, DH, EH, ER, EY, F, G, HH, IH, IY, JH, K,
  L, M, N, NG, OW, OY, P, R, S, SH, T, TH, UH, UW, V, W, Y, Z, ZH
};

inline constexpr std::size_t kPhonemeCount = 39;

inline constexpr std::array<std::string_view, kPhonemeCount> kPhonemeSymbols = {
    "AA", "AE", "AH", "AO", "AW", "AY", "B",  "CH", "D",  "DH", "EH", "ER", "EY",
    "F",  "G",  "HH", "IH", "IY", "JH", "K",  "L",  "M",  "N",  "NG", "OW", "OY",
    "P",  "R",  "S",  "SH", "T",  "TH", "UH", "UW", "V",  "W",  "Y",  "Z",  "ZH"};

using PhonemeSeq = std::vector<Phoneme>;

constexpr std::size_t index_of(Phoneme p) { return static_cast<std::size_t>(p); }

constexpr std::string_view symbol(Phoneme p) { return kPhonemeSymbols[index_of(p)]; }

inline Phoneme phoneme_at(std::size_t i) {
  if (i >= kPhonemeCount) throw InvalidArgument("phoneme index out of range");
  return static_cast<Phoneme>(i);
}

// Exact symbol match, case-sensitive, no stress digits.
inline std::optional<Phoneme> find_phoneme(std::string_view sym) {
  for (std::size_t i = 0; i < kPhonemeCount; ++i)
    if (kPhonemeSymbols[i] == sym) return static_cast<Phoneme>(i);
  return std::nullopt;
}

// Accepts dictionary tokens such as "IY1" or "ih0": stress digits are
// stripped and case is normalized before the inventory lookup.
inline std::optional<Phoneme> parse_phoneme_token(std::string_view tok) {
  while (!tok.empty() && tok.back() >= '0' && tok.back() <= '2') tok.remove_suffix(1);
  if (tok.empty() || tok.size() > 2) return std::nullopt;
  char up[2];
  for (std::size_t i = 0; i < tok.size(); ++i) {
    const char c = tok[i];
    up[i] = (c >= 'a' && c <= 'z') ? static_cast<char>(c - 'a' + 'A') : c;
  }
  return find_phoneme(std::string_view(up, tok.size()));
}

inline Phoneme make_phoneme(std::string_view sym) {
  auto p = find_phoneme(sym);
  if (!p) throw InvalidArgument("unknown ARPAbet symbol '" + std::string(sym) + "'");
  return *p;
}

// Parses a whitespace-separated symbol list ("S IY L IH NG").
inline PhonemeSeq parse_phonemes(std::string_view text) {
  PhonemeSeq seq;
  for (auto tok : util::split_ws(text)) {
    auto p = parse_phoneme_token(tok);
    if (!p) throw InvalidArgument("unknown ARPAbet symbol '" + std::string(tok) + "'");
    seq.push_back(*p);
  }
  return seq;
}

inline std::string to_string(const PhonemeSeq& seq) {
  std::string out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i) out += ' ';
    out += symbol(seq[i]);
  }
  return out;
}

}  // namespace pairsim

#endif  // PAIRSIM_PHONEME_HPP_
