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

// N-trial two-alternative scoring and balanced final-set selection.

#ifndef PAIRSIM_DIAGNOSTICS_HPP_
#define PAIRSIM_DIAGNOSTICS_HPP_

#include <algorithm>
#include <compare>
#include <cstdint>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pairsim/adapter.hpp"
#include "pairsim/common.hpp"
#include "pairsim/lexicon.hpp"
#include "pairsim/listeners.hpp"
#include "pairsim/parallel.hpp"
#include "pairsim/phonalign.hpp"
#include "pairsim/rng.hpp"

namespace pairsim {

// Exact rational, always reduced with a positive denominator.
class Fraction {
  __extension__ using Wide = __int128;

 public:
  constexpr Fraction() = default;
  Fraction(std::int64_t num, std::int64_t den) : num_(num), den_(den) {
    if (den == 0) throw InvalidArgument("fraction with zero denominator");
    normalize();
  }

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }
  double value() const { return static_cast<double>(num_) / static_cast<double>(den_); }

  friend Fraction operator+(const Fraction& a, const Fraction& b) {
    const std::int64_t l = std::lcm(a.den_, b.den_);
    return {a.num_ * (l / a.den_) + b.num_ * (l / b.den_), l};
  }
  friend Fraction operator-(const Fraction& a, const Fraction& b) { return a + Fraction(-b.num_, b.den_); }
  friend bool operator==(const Fraction&, const Fraction&) = default;
  friend std::strong_ordering operator<=>(const Fraction& a, const Fraction& b) {
    return static_cast<Wide>(a.num_) * b.den_ <=> static_cast<Wide>(b.num_) * a.den_;
  }

  // Decimal text such as "0.9", "-1", "1.25" parsed without rounding.
  static Fraction parse(std::string_view text) {
    auto s = util::trim(text);
    bool neg = false;
    if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
      neg = s[0] == '-';
      s.remove_prefix(1);
    }
    std::int64_t num = 0, den = 1;
    bool seen_dot = false, any = false;
    for (char c : s) {
      if (c == '.' && !seen_dot) {
        seen_dot = true;
        continue;
      }
      if (c < '0' || c > '9') throw InvalidArgument("not a decimal: '" + std::string(text) + "'");
      if (num > 100000000000000LL || den > 100000000000000LL)
        throw InvalidArgument("decimal has too many digits: '" + std::string(text) + "'");
      num = num * 10 + (c - '0');
      if (seen_dot) den *= 10;
      any = true;
    }
    if (!any) throw InvalidArgument("not a decimal: '" + std::string(text) + "'");
    return {neg ? -num : num, den};
  }

 private:
  void normalize() {
    if (den_ < 0) {
      num_ = -num_;
      den_ = -den_;
    }
    const std::int64_t g = std::gcd(num_ < 0 ? -num_ : num_, den_);
    if (g > 1) {
      num_ /= g;
      den_ /= g;
    }
  }

  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

inline std::string to_string(const Fraction& f) { return util::format_double(f.value()); }

enum class Direction { kForward, kReverse };

inline std::string to_string(Direction d) { return d == Direction::kForward ? "forward" : "reverse"; }

inline Direction parse_direction(std::string_view s) {
  if (s == "forward") return Direction::kForward;
  if (s == "reverse") return Direction::kReverse;
  throw InvalidArgument("unknown direction '" + std::string(s) + "'");
}

// The pair read in the given direction: stimulus is what gets played.
inline MinimalPair directed(const MinimalPair& p, Direction d) {
  return d == Direction::kForward ? p : reversed(p);
}

enum class Choice { kStimulus, kTarget };

inline std::string to_string(Choice c) { return c == Choice::kStimulus ? "stimulus" : "target"; }

inline Choice parse_choice(std::string_view s) {
  if (s == "stimulus") return Choice::kStimulus;
  if (s == "target") return Choice::kTarget;
  throw InvalidArgument("unknown choice '" + std::string(s) + "'");
}

// Nearest alternative by phoneme edit distance; ties go to the stimulus.
// Without a decodable output the orthography is compared instead.
inline Choice closest_guess(const std::optional<PhonemeSeq>& output, const PhonemeSeq& stim,
                            const PhonemeSeq& target, std::string_view raw = {},
                            std::string_view stim_word = {}, std::string_view target_word = {}) {
  if (stim == target && (output || stim_word == target_word))
    throw InvalidArgument("closest_guess: alternatives are identical");
  if (output) {
    return phoneme_levenshtein(*output, target) < phoneme_levenshtein(*output, stim) ? Choice::kTarget
                                                                                     : Choice::kStimulus;
  }
  const std::string text = util::to_lower(util::trim(raw));
  return string_levenshtein(text, util::to_lower(target_word)) < string_levenshtein(text, util::to_lower(stim_word))
             ? Choice::kTarget
             : Choice::kStimulus;
}

struct TrialResult {
  std::string raw_transcript;
  std::optional<PhonemeSeq> phonemes;
  Choice decision = Choice::kStimulus;
  std::uint64_t trial_seed = 0;
  std::size_t stimulus_variant = 0;

  friend bool operator==(const TrialResult&, const TrialResult&) = default;
};

struct TrialLog {
  MinimalPair pair;  // as curated; direction says which word is played
  Direction direction = Direction::kForward;
  std::size_t n_trials = 0;
  std::vector<TrialResult> nh_results;
  std::vector<TrialResult> hi_results;

  MinimalPair reading() const { return directed(pair, direction); }

  friend bool operator==(const TrialLog&, const TrialLog&) = default;
};

inline constexpr std::size_t kMaxTrialAttempts = 3;

namespace detail {

// One scored trial. Transport failures redraw with a fresh derived seed.
inline TrialResult run_one_trial(const ListenerContext& ctx, const MinimalPair& reading, const ListenerSpec& who,
                                 std::uint64_t run_seed, std::size_t t) {
  const std::string tag = "diagnose/" + who.name + "/" + reading.confusion;
  for (std::size_t attempt = 0;; ++attempt) {
    const std::uint64_t seed =
        trial_seed(run_seed, reading.stimulus, attempt ? tag + "#" + std::to_string(attempt) : tag, t);
    try {
      auto r = simulate_listener(ctx, reading.stimulus, who, seed, reading.stimulus_variant);
      const Choice c = closest_guess(r.phonemes, reading.stimulus_pron, reading.confusion_pron, r.raw_transcript,
                                     reading.stimulus, reading.confusion);
      return {std::move(r.raw_transcript), std::move(r.phonemes), c, seed, reading.stimulus_variant};
    } catch (const TransportError& e) {
      if (attempt + 1 >= kMaxTrialAttempts)
        throw Error("trial " + std::to_string(t) + " of " + reading.id() + " failed after " +
                    std::to_string(kMaxTrialAttempts) + " attempts: " + e.what());
    }
  }
}

}  // namespace detail

inline TrialLog run_trials(const ListenerContext& ctx, const MinimalPair& pair, Direction direction,
                           std::size_t n_trials, const ListenerSpec& nh, const ListenerSpec& hi,
                           std::uint64_t run_seed, std::size_t jobs = 1) {
  if (n_trials == 0) throw InvalidArgument("run_trials: n_trials must be >= 1");
  nh.validate();
  hi.validate();
  TrialLog log{pair, direction, n_trials, std::vector<TrialResult>(n_trials), std::vector<TrialResult>(n_trials)};
  const MinimalPair reading = log.reading();
  parallel_for(2 * n_trials, jobs, [&](std::size_t i) {
    const std::size_t t = i / 2;
    if (i % 2 == 0) {
      log.nh_results[t] = detail::run_one_trial(ctx, reading, nh, run_seed, t);
    } else {
      log.hi_results[t] = detail::run_one_trial(ctx, reading, hi, run_seed, t);
    }
  });
  return log;
}

// Both directions of every pair, in input order (forward before reverse).
inline std::vector<TrialLog> run_all_trials(const ListenerContext& ctx, const std::vector<MinimalPair>& pairs,
                                            std::size_t n_trials, const ListenerSpec& nh, const ListenerSpec& hi,
                                            std::uint64_t run_seed, std::size_t jobs = 1) {
  std::vector<TrialLog> logs(2 * pairs.size());
  parallel_for(logs.size(), jobs, [&](std::size_t i) {
    logs[i] = run_trials(ctx, pairs[i / 2], i % 2 ? Direction::kReverse : Direction::kForward, n_trials, nh, hi,
                         run_seed);
  });
  return logs;
}

struct DiagnosticScore {
  Fraction sensitivity;
  Fraction specificity;
  Fraction j;

  static DiagnosticScore from(Fraction sens, Fraction spec) { return {sens, spec, sens + spec - Fraction(1, 1)}; }

  friend bool operator==(const DiagnosticScore&, const DiagnosticScore&) = default;
};

inline DiagnosticScore score(const TrialLog& log) {
  if (log.n_trials == 0 || log.nh_results.size() != log.n_trials || log.hi_results.size() != log.n_trials)
    throw InvalidArgument("score: inconsistent trial log");
  const auto n = static_cast<std::int64_t>(log.n_trials);
  const auto hits = std::count_if(log.hi_results.begin(), log.hi_results.end(),
                                  [](const TrialResult& r) { return r.decision == Choice::kTarget; });
  const auto rejections = std::count_if(log.nh_results.begin(), log.nh_results.end(),
                                        [](const TrialResult& r) { return r.decision == Choice::kStimulus; });
  return DiagnosticScore::from({hits, n}, {rejections, n});
}

// One scored confusion direction, the unit of selection.
struct SelectionItem {
  std::string stimulus;
  std::string target;
  SubstitutionPattern pattern;
  DiagnosticScore score;

  // Same for both directions of a pair.
  std::string pair_key() const { return std::min(stimulus, target) + "~" + std::max(stimulus, target); }

  friend bool operator==(const SelectionItem&, const SelectionItem&) = default;
};

inline SelectionItem selection_item(const TrialLog& log) {
  const auto r = log.reading();
  return {r.stimulus, r.confusion, r.pattern, score(log)};
}

enum class AuditAction { kTaken, kPatternFull, kPairTaken, kTargetReached };

inline std::string to_string(AuditAction a) {
  switch (a) {
    case AuditAction::kTaken: return "taken";
    case AuditAction::kPatternFull: return "pattern_full";
    case AuditAction::kPairTaken: return "pair_taken";
    case AuditAction::kTargetReached: return "target_reached";
  }
  return "?";
}

struct AuditEntry {
  SelectionItem item;
  AuditAction action = AuditAction::kTaken;
  std::size_t pattern_count = 0;  // count of the item's pattern when it was considered
};

struct SelectionResult {
  std::vector<SelectionItem> items;
  std::map<std::string, std::size_t> pattern_counts;  // "S->F" -> n
  std::vector<AuditEntry> audit;                      // every candidate, in scan order
  bool exhausted = false;                             // fewer than target_size items
};

// Ranked scan order: J desc, sensitivity desc, stimulus, then target.
inline bool ranks_before(const SelectionItem& a, const SelectionItem& b) {
  if (a.score.j != b.score.j) return a.score.j > b.score.j;
  if (a.score.sensitivity != b.score.sensitivity) return a.score.sensitivity > b.score.sensitivity;
  if (a.stimulus != b.stimulus) return a.stimulus < b.stimulus;
  return a.target < b.target;
}

inline SelectionResult select_balanced(std::vector<SelectionItem> pool, std::size_t target_size = 25,
                                       std::size_t max_per_pattern = 3) {
  if (max_per_pattern == 0) throw InvalidArgument("max_per_pattern must be >= 1");
  std::stable_sort(pool.begin(), pool.end(), ranks_before);
  SelectionResult out;
  std::map<std::string, bool> pairs_taken;
  for (auto& item : pool) {
    const std::string pat = to_string(item.pattern);
    std::size_t& count = out.pattern_counts[pat];
    AuditAction action = AuditAction::kTaken;
    if (out.items.size() >= target_size) {
      action = AuditAction::kTargetReached;
    } else if (pairs_taken.count(item.pair_key())) {
      action = AuditAction::kPairTaken;
    } else if (count >= max_per_pattern) {
      action = AuditAction::kPatternFull;
    }
    out.audit.push_back({item, action, count});
    if (action != AuditAction::kTaken) continue;
    ++count;
    pairs_taken[item.pair_key()] = true;
    out.items.push_back(item);
  }
  std::erase_if(out.pattern_counts, [](const auto& kv) { return kv.second == 0; });
  out.exhausted = out.items.size() < target_size;
  return out;
}

// Final-set table. PhonemeChange is written "S->F" and read in any form
// parse_pattern accepts.
inline constexpr const char* kFinalSetHeader = "Stimulus,TargetConfusion,PhonemeChange,J_Score,Sensitivity,Specificity";

inline void write_final_set_csv(std::ostream& os, const std::vector<SelectionItem>& items) {
  os << kFinalSetHeader << '\n';
  for (const auto& it : items)
    os << util::csv_field(it.stimulus) << ',' << util::csv_field(it.target) << ',' << to_string(it.pattern) << ','
       << to_string(it.score.j) << ',' << to_string(it.score.sensitivity) << ','
       << to_string(it.score.specificity) << '\n';
}

// Rows keep the J text as written in the file so the identity can be checked.
struct FinalSetRow {
  SelectionItem item;  // item.score.j is recomputed from sensitivity and specificity
  Fraction j_column;
};

inline std::vector<FinalSetRow> read_final_set_csv(std::istream& is) {
  std::vector<FinalSetRow> rows;
  std::string line;
  if (!std::getline(is, line)) throw InvalidArgument("final-set CSV is empty");
  auto header = util::split_csv(line);
  for (auto& h : header) h = std::string(util::trim(h));
  const std::vector<std::string> want = util::split_csv(kFinalSetHeader);
  if (header != want) throw InvalidArgument("final-set CSV header mismatch: " + line);
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (util::trim(line).empty()) continue;
    auto f = util::split_csv(line);
    if (f.size() != 6)
      throw InvalidArgument("final-set CSV line " + std::to_string(line_no) + ": expected 6 fields");
    const auto word = [](const std::string& s) { return util::to_lower(util::trim(s)); };
    FinalSetRow r;
    r.item.stimulus = word(f[0]);
    r.item.target = word(f[1]);
    r.item.pattern = parse_pattern(f[2]);
    r.item.score = DiagnosticScore::from(Fraction::parse(f[4]), Fraction::parse(f[5]));
    r.j_column = Fraction::parse(f[3]);
    rows.push_back(std::move(r));
  }
  return rows;
}

// Per-direction scores: the diagnose phase's tabular output.
inline void write_scores_csv(std::ostream& os, const std::vector<TrialLog>& logs) {
  os << "stimulus,target,direction,pattern,n_trials,hi_target,nh_stimulus,sensitivity,specificity,j\n";
  for (const auto& log : logs) {
    const auto s = score(log);
    const auto r = log.reading();
    const auto n = static_cast<std::int64_t>(log.n_trials);
    os << r.stimulus << ',' << r.confusion << ',' << to_string(log.direction) << ',' << to_string(r.pattern) << ','
       << log.n_trials << ',' << s.sensitivity.num() * (n / s.sensitivity.den()) << ','
       << s.specificity.num() * (n / s.specificity.den()) << ',' << to_string(s.sensitivity) << ','
       << to_string(s.specificity) << ',' << to_string(s.j) << '\n';
  }
}

}  // namespace pairsim

#endif  // PAIRSIM_DIAGNOSTICS_HPP_
