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

// Unit-cost phoneme edit distance, alignment backtrace and the aggregate
// views built on top of it (operation tallies, confusion matrices).

#ifndef PAIRSIM_PHONALIGN_HPP_
#define PAIRSIM_PHONALIGN_HPP_

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pairsim/common.hpp"
#include "pairsim/phoneme.hpp"

namespace pairsim {

// Works on any random-access sequence of equality-comparable symbols; the
// phoneme overloads below are the public entry points.
template <typename T>
std::size_t edit_distance(std::span<const T> a, std::span<const T> b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      const std::size_t sub = diag + (a[i - 1] == b[j - 1] ? 0 : 1);
      row[j] = std::min({sub, up + 1, row[j - 1] + 1});
      diag = up;
    }
  }
  return row[b.size()];
}

inline std::size_t phoneme_levenshtein(const PhonemeSeq& a, const PhonemeSeq& b) {
  return edit_distance<Phoneme>(a, b);
}

// Character-level distance, used when a transcript has no pronunciation.
inline std::size_t string_levenshtein(std::string_view a, std::string_view b) {
  return edit_distance<char>(std::span<const char>(a.data(), a.size()),
                             std::span<const char>(b.data(), b.size()));
}

enum class OpKind { kMatch, kSubstitution, kDeletion, kInsertion };

inline std::string_view to_string(OpKind k) {
  switch (k) {
    case OpKind::kMatch: return "match";
    case OpKind::kSubstitution: return "substitution";
    case OpKind::kDeletion: return "deletion";
    case OpKind::kInsertion: return "insertion";
  }
  return "?";
}

// Deletion: a stimulus phoneme absent from the output. Insertion: an output
// phoneme with no stimulus counterpart.
struct EditOp {
  OpKind kind = OpKind::kMatch;
  std::optional<Phoneme> stim;
  std::optional<Phoneme> out;
  std::optional<std::size_t> stim_index;
  std::optional<std::size_t> out_index;

  friend bool operator==(const EditOp&, const EditOp&) = default;
};

struct EditOps {
  std::size_t distance = 0;
  std::vector<EditOp> ops;  // in stimulus order

  friend bool operator==(const EditOps&, const EditOps&) = default;
};

// One optimal alignment. The backtrace starts at the ends of both sequences
// and prefers match, then substitution, then deletion, then insertion, so
// the result is a deterministic function of the inputs.
inline EditOps align(const PhonemeSeq& a, const PhonemeSeq& b) {
  const std::size_t n = a.size(), m = b.size();
  const std::size_t w = m + 1;
  std::vector<std::size_t> d((n + 1) * w);
  for (std::size_t i = 0; i <= n; ++i) d[i * w] = i;
  for (std::size_t j = 0; j <= m; ++j) d[j] = j;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      d[i * w + j] = std::min({d[(i - 1) * w + j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1),
                               d[(i - 1) * w + j] + 1, d[i * w + j - 1] + 1});

  EditOps out;
  out.distance = d[n * w + m];
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    const std::size_t here = d[i * w + j];
    if (i > 0 && j > 0 && a[i - 1] == b[j - 1] && here == d[(i - 1) * w + j - 1]) {
      out.ops.push_back({OpKind::kMatch, a[i - 1], b[j - 1], i - 1, j - 1});
      --i, --j;
    } else if (i > 0 && j > 0 && here == d[(i - 1) * w + j - 1] + 1) {
      out.ops.push_back({OpKind::kSubstitution, a[i - 1], b[j - 1], i - 1, j - 1});
      --i, --j;
    } else if (i > 0 && here == d[(i - 1) * w + j] + 1) {
      out.ops.push_back({OpKind::kDeletion, a[i - 1], std::nullopt, i - 1, std::nullopt});
      --i;
    } else {
      out.ops.push_back({OpKind::kInsertion, std::nullopt, b[j - 1], std::nullopt, j - 1});
      --j;
    }
  }
  std::reverse(out.ops.begin(), out.ops.end());
  return out;
}

// Applies `ops` to `stim`, reconstructing the output sequence. Throws if the
// ops are inconsistent with the stimulus.
inline PhonemeSeq replay(const PhonemeSeq& stim, const EditOps& ops) {
  PhonemeSeq out;
  std::size_t i = 0;
  for (const auto& op : ops.ops) {
    switch (op.kind) {
      case OpKind::kMatch:
      case OpKind::kSubstitution:
        if (i >= stim.size() || stim[i] != op.stim) throw InvalidArgument("replay: stimulus mismatch");
        out.push_back(*op.out);
        ++i;
        break;
      case OpKind::kDeletion:
        if (i >= stim.size() || stim[i] != op.stim) throw InvalidArgument("replay: stimulus mismatch");
        ++i;
        break;
      case OpKind::kInsertion:
        out.push_back(*op.out);
        break;
    }
  }
  if (i != stim.size()) throw InvalidArgument("replay: ops do not cover the stimulus");
  return out;
}

using PhonemePair = std::pair<Phoneme, Phoneme>;

struct OpTally {
  std::map<Phoneme, std::size_t> deletions;
  std::map<Phoneme, std::size_t> insertions;
  std::map<PhonemePair, std::size_t> substitutions;
  std::size_t total_distance = 0;
  std::size_t n_alignments = 0;

  void add(const EditOps& e) {
    for (const auto& op : e.ops) {
      switch (op.kind) {
        case OpKind::kMatch: break;
        case OpKind::kSubstitution: ++substitutions[{*op.stim, *op.out}]; break;
        case OpKind::kDeletion: ++deletions[*op.stim]; break;
        case OpKind::kInsertion: ++insertions[*op.out]; break;
      }
    }
    total_distance += e.distance;
    ++n_alignments;
  }

  // Associative, commutative merge for parallel reductions.
  void merge(const OpTally& o) {
    for (const auto& [k, v] : o.deletions) deletions[k] += v;
    for (const auto& [k, v] : o.insertions) insertions[k] += v;
    for (const auto& [k, v] : o.substitutions) substitutions[k] += v;
    total_distance += o.total_distance;
    n_alignments += o.n_alignments;
  }

  std::size_t op_count() const {
    std::size_t n = 0;
    for (const auto& [k, v] : deletions) n += v;
    for (const auto& [k, v] : insertions) n += v;
    for (const auto& [k, v] : substitutions) n += v;
    return n;
  }

  friend bool operator==(const OpTally&, const OpTally&) = default;
};

inline OpTally tally(std::span<const EditOps> alignments) {
  OpTally t;
  for (const auto& a : alignments) t.add(a);
  return t;
}

// Either a single phoneme (deletions, insertions) or a from->to pair.
struct RankedOp {
  Phoneme from;
  std::optional<Phoneme> to;
  std::size_t count;

  friend bool operator==(const RankedOp&, const RankedOp&) = default;
};

// Count descending; ties in ARPAbet order of (from, to).
inline std::vector<RankedOp> top_k(const OpTally& t, OpKind kind, std::size_t k) {
  if (k == 0) throw InvalidArgument("top_k: k must be >= 1");
  std::vector<RankedOp> all;
  switch (kind) {
    case OpKind::kDeletion:
      for (const auto& [p, c] : t.deletions) all.push_back({p, std::nullopt, c});
      break;
    case OpKind::kInsertion:
      for (const auto& [p, c] : t.insertions) all.push_back({p, std::nullopt, c});
      break;
    case OpKind::kSubstitution:
      for (const auto& [p, c] : t.substitutions) all.push_back({p.first, p.second, c});
      break;
    case OpKind::kMatch:
      throw InvalidArgument("top_k: matches are not tallied");
  }
  std::stable_sort(all.begin(), all.end(), [](const RankedOp& x, const RankedOp& y) {
    if (x.count != y.count) return x.count > y.count;
    return std::pair(x.from, x.to) < std::pair(y.from, y.to);
  });
  if (all.size() > k) all.resize(k);
  return all;
}

inline double mean_distance(std::span<const EditOps> alignments) {
  if (alignments.empty()) throw InvalidArgument("mean_distance: no alignments");
  std::size_t total = 0;
  for (const auto& a : alignments) total += a.distance;
  return static_cast<double>(total) / static_cast<double>(alignments.size());
}

// Rows are stimulus phonemes, columns output phonemes; the diagonal holds
// matches. Deletions and insertions live in side vectors.
struct ConfusionMatrix {
  using Row = std::array<std::size_t, kPhonemeCount>;
  std::array<Row, kPhonemeCount> counts{};
  Row deletions{};
  Row insertions{};

  void add(const EditOps& e) {
    for (const auto& op : e.ops) {
      switch (op.kind) {
        case OpKind::kMatch:
        case OpKind::kSubstitution: ++counts[index_of(*op.stim)][index_of(*op.out)]; break;
        case OpKind::kDeletion: ++deletions[index_of(*op.stim)]; break;
        case OpKind::kInsertion: ++insertions[index_of(*op.out)]; break;
      }
    }
  }

  // Matches + substitutions + deletions for stimulus phoneme r.
  std::size_t row_total(Phoneme r) const {
    std::size_t s = deletions[index_of(r)];
    for (auto c : counts[index_of(r)]) s += c;
    return s;
  }

  // Proportions over (matches + substitutions + deletions); the last entry
  // of each returned row is the deletion share. Zero rows stay zero.
  std::array<std::array<double, kPhonemeCount + 1>, kPhonemeCount> normalized() const {
    std::array<std::array<double, kPhonemeCount + 1>, kPhonemeCount> out{};
    for (std::size_t r = 0; r < kPhonemeCount; ++r) {
      const auto total = row_total(static_cast<Phoneme>(r));
      if (!total) continue;
      for (std::size_t c = 0; c < kPhonemeCount; ++c)
        out[r][c] = static_cast<double>(counts[r][c]) / static_cast<double>(total);
      out[r][kPhonemeCount] = static_cast<double>(deletions[r]) / static_cast<double>(total);
    }
    return out;
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix confusion_matrix(std::span<const EditOps> alignments) {
  ConfusionMatrix m;
  for (const auto& a : alignments) m.add(a);
  return m;
}

// Header row and column of ARPAbet symbols; trailing DEL column and INS row.
inline void write_confusion_csv(std::ostream& os, const ConfusionMatrix& m) {
  os << "stimulus";
  for (auto s : kPhonemeSymbols) os << ',' << s;
  os << ",DEL\n";
  for (std::size_t r = 0; r < kPhonemeCount; ++r) {
    os << kPhonemeSymbols[r];
    for (std::size_t c = 0; c < kPhonemeCount; ++c) os << ',' << m.counts[r][c];
    os << ',' << m.deletions[r] << '\n';
  }
  os << "INS";
  for (std::size_t c = 0; c < kPhonemeCount; ++c) os << ',' << m.insertions[c];
  os << ",0\n";
}

// kind,from,to,count ; `to` is empty for deletions, `from` for insertions.
inline void write_tally_csv(std::ostream& os, const OpTally& t) {
  os << "kind,from,to,count\n";
  for (const auto& [p, c] : t.deletions) os << "deletion," << symbol(p) << ",," << c << '\n';
  for (const auto& [p, c] : t.insertions) os << "insertion,," << symbol(p) << ',' << c << '\n';
  for (const auto& [p, c] : t.substitutions)
    os << "substitution," << symbol(p.first) << ',' << symbol(p.second) << ',' << c << '\n';
}

}  // namespace pairsim

#endif  // PAIRSIM_PHONALIGN_HPP_
