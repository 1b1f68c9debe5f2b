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

// JSON and JSON-lines encodings of the engine's records.
//
// Phoneme sequences are written as space-separated ARPAbet strings,
// patterns as "S->F" and an infinite SNR as the string "inf".

#ifndef PAIRSIM_SERIALIZE_HPP_
#define PAIRSIM_SERIALIZE_HPP_

#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pairsim/analysis.hpp"
#include "pairsim/common.hpp"
#include "pairsim/diagnostics.hpp"
#include "pairsim/hearing_dsp.hpp"
#include "pairsim/lexicon.hpp"
#include "pairsim/listeners.hpp"
#include "pairsim/phonalign.hpp"
#include "pairsim/pipeline.hpp"

namespace pairsim {

using json = nlohmann::json;

inline json seq_json(const PhonemeSeq& s) { return to_string(s); }
inline json opt_seq_json(const std::optional<PhonemeSeq>& s) { return s ? seq_json(*s) : json(nullptr); }
inline std::optional<PhonemeSeq> opt_seq_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return parse_phonemes(j.get<std::string>());
}

inline json snr_json(double snr) { return std::isinf(snr) ? json("inf") : json(snr); }

inline double snr_from(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "+inf" || s == "infinity") return kNoNoise;
    return util::parse_double(s);
  }
  if (j.is_null()) return kNoNoise;
  return j.get<double>();
}

inline json profile_json(const AudiogramProfile& p) {
  json anchors = json::array();
  for (const auto& [hz, db] : p.anchors) anchors.push_back({hz, db});
  return {{"name", p.name}, {"anchors", anchors}};
}

// Either a built-in name or {name, anchors: [[Hz, dB], ...]}.
inline AudiogramProfile profile_from(const json& j) {
  if (j.is_string()) return named_profile(j.get<std::string>());
  AudiogramProfile p;
  p.name = j.value("name", "custom");
  for (const auto& a : j.at("anchors")) p.anchors.emplace_back(a.at(0).get<double>(), a.at(1).get<double>());
  p.validate();
  return p;
}

inline json degradation_json(const DegradationSpec& d) {
  return {{"profile", profile_json(d.profile)},
          {"snr_db", snr_json(d.snr_db)},
          {"noise_kind", to_string(d.noise_kind)},
          {"noise_seed", d.noise_seed},
          {"order", d.order == DegradeOrder::kNoiseThenFilter ? "noise_then_filter" : "filter_then_noise"}};
}

inline DegradationSpec degradation_from(const json& j) {
  DegradationSpec d;
  if (j.contains("profile")) d.profile = profile_from(j["profile"]);
  if (j.contains("snr_db")) d.snr_db = snr_from(j["snr_db"]);
  if (j.contains("noise_kind")) d.noise_kind = parse_noise_kind(j["noise_kind"].get<std::string>());
  d.noise_seed = j.value("noise_seed", std::uint64_t{0});
  const auto order = j.value("order", std::string("noise_then_filter"));
  if (order == "noise_then_filter") {
    d.order = DegradeOrder::kNoiseThenFilter;
  } else if (order == "filter_then_noise") {
    d.order = DegradeOrder::kFilterThenNoise;
  } else {
    throw InvalidArgument("unknown degradation order '" + order + "'");
  }
  d.validate();
  return d;
}

// "mild@10", "normal@inf", "moderate@0": built-in profile at an SNR.
inline DegradationSpec parse_condition(std::string_view label) {
  const auto at = label.find('@');
  DegradationSpec d;
  d.profile = named_profile(std::string(label.substr(0, at)));
  if (at != std::string_view::npos) d.snr_db = snr_from(json(std::string(label.substr(at + 1))));
  d.validate();
  return d;
}

// "zero", or {"sub_probs": {"S->F": 0.8}, "del_probs": {"S": 0.1},
// "ins_prob": 0.0, "decode_to_lexicon": true}. Unlisted events are zero.
inline ChannelParams channel_from(const json& j) {
  ChannelParams c = zero_channel();
  if (j.is_string()) {
    if (j.get<std::string>() == "zero") return c;
    throw InvalidArgument("unknown channel '" + j.get<std::string>() + "'");
  }
  if (j.contains("sub_probs"))
    for (const auto& [k, v] : j["sub_probs"].items()) {
      const auto pat = parse_pattern(k);
      c.sub_probs[{pat.from, pat.to}] = v.get<double>();
    }
  if (j.contains("del_probs"))
    for (const auto& [k, v] : j["del_probs"].items()) c.del_probs[index_of(make_phoneme(k))] = v.get<double>();
  c.ins_prob = j.value("ins_prob", 0.0);
  c.decode_to_lexicon = j.value("decode_to_lexicon", true);
  c.validate();
  return c;
}

inline json channel_json(const ChannelParams& c) {
  json subs = json::object(), dels = json::object();
  for (const auto& [k, v] : c.sub_probs) subs[to_string(make_pattern(k.first, k.second))] = v;
  for (std::size_t i = 0; i < kPhonemeCount; ++i)
    if (c.del_probs[i] != 0.0) dels[std::string(kPhonemeSymbols[i])] = c.del_probs[i];
  return {{"sub_probs", subs}, {"del_probs", dels}, {"ins_prob", c.ins_prob},
          {"decode_to_lexicon", c.decode_to_lexicon}};
}

inline json pair_json(const MinimalPair& p) {
  return {{"id", p.id()},
          {"stimulus", p.stimulus},
          {"confusion", p.confusion},
          {"stimulus_pron", seq_json(p.stimulus_pron)},
          {"confusion_pron", seq_json(p.confusion_pron)},
          {"position", p.position},
          {"pattern", to_string(p.pattern)},
          {"stimulus_variant", p.stimulus_variant},
          {"confusion_variant", p.confusion_variant}};
}

inline MinimalPair pair_from(const json& j) {
  MinimalPair p;
  p.stimulus = j.at("stimulus").get<std::string>();
  p.confusion = j.at("confusion").get<std::string>();
  p.stimulus_pron = parse_phonemes(j.at("stimulus_pron").get<std::string>());
  p.confusion_pron = parse_phonemes(j.at("confusion_pron").get<std::string>());
  p.position = j.at("position").get<std::size_t>();
  p.pattern = parse_pattern(j.at("pattern").get<std::string>());
  p.stimulus_variant = j.value("stimulus_variant", std::size_t{0});
  p.confusion_variant = j.value("confusion_variant", std::size_t{0});
  if (!is_valid_minimal_pair(p)) throw InvalidArgument("malformed minimal pair record " + p.id());
  return p;
}

inline json edit_ops_json(const EditOps& e) {
  json ops = json::array();
  for (const auto& op : e.ops) {
    json o = {{"op", to_string(op.kind)}};
    if (op.stim) o["stim"] = symbol(*op.stim);
    if (op.out) o["out"] = symbol(*op.out);
    ops.push_back(std::move(o));
  }
  return {{"distance", e.distance}, {"ops", ops}};
}

inline json record_json(const ConfusionRecord& r) {
  return {{"stimulus_word", r.stimulus_word},
          {"nh_output", r.nh_output},
          {"hi_output", r.hi_output},
          {"stimulus_pron", seq_json(r.stimulus_pron)},
          {"hi_pron", opt_seq_json(r.hi_pron)},
          {"alignment", r.alignment ? edit_ops_json(*r.alignment) : json(nullptr)},
          {"trial_seed", r.trial_seed}};
}

// The alignment is recomputed rather than parsed; it is a pure function of
// the two pronunciations.
inline ConfusionRecord record_from(const json& j) {
  ConfusionRecord r;
  r.stimulus_word = j.at("stimulus_word").get<std::string>();
  r.nh_output = j.at("nh_output").get<std::string>();
  r.hi_output = j.at("hi_output").get<std::string>();
  r.stimulus_pron = parse_phonemes(j.at("stimulus_pron").get<std::string>());
  r.hi_pron = opt_seq_from(j.at("hi_pron"));
  if (r.hi_pron) r.alignment = align(r.stimulus_pron, *r.hi_pron);
  r.trial_seed = j.at("trial_seed").get<std::uint64_t>();
  return r;
}

inline json trial_result_json(const TrialResult& t) {
  return {{"raw", t.raw_transcript},
          {"phonemes", opt_seq_json(t.phonemes)},
          {"decision", to_string(t.decision)},
          {"seed", t.trial_seed},
          {"variant", t.stimulus_variant}};
}

inline TrialResult trial_result_from(const json& j) {
  return {j.at("raw").get<std::string>(), opt_seq_from(j.at("phonemes")),
          parse_choice(j.at("decision").get<std::string>()), j.at("seed").get<std::uint64_t>(),
          j.value("variant", std::size_t{0})};
}

inline json trial_log_json(const TrialLog& log) {
  const auto r = log.reading();
  json nh = json::array(), hi = json::array();
  for (const auto& t : log.nh_results) nh.push_back(trial_result_json(t));
  for (const auto& t : log.hi_results) hi.push_back(trial_result_json(t));
  return {{"pair", pair_json(log.pair)}, {"direction", to_string(log.direction)},
          {"stimulus", r.stimulus},      {"target", r.confusion},
          {"n_trials", log.n_trials},    {"nh", nh},
          {"hi", hi}};
}

inline TrialLog trial_log_from(const json& j) {
  TrialLog log;
  log.pair = pair_from(j.at("pair"));
  log.direction = parse_direction(j.at("direction").get<std::string>());
  log.n_trials = j.at("n_trials").get<std::size_t>();
  for (const auto& t : j.at("nh")) log.nh_results.push_back(trial_result_from(t));
  for (const auto& t : j.at("hi")) log.hi_results.push_back(trial_result_from(t));
  if (log.nh_results.size() != log.n_trials || log.hi_results.size() != log.n_trials)
    throw InvalidArgument("trial log for " + log.pair.id() + " has the wrong number of results");
  return log;
}

// Lexicon export record: {"word": ..., "prons": [["K", "R", "AE", "B"], ...]}.
inline json lex_entry_json(const LexEntry& e) {
  json prons = json::array();
  for (const auto& p : e.prons) {
    json syms = json::array();
    for (auto ph : p) syms.push_back(symbol(ph));
    prons.push_back(std::move(syms));
  }
  return {{"word", e.word}, {"prons", prons}};
}

inline LexEntry lex_entry_from(const json& j) {
  LexEntry e;
  e.word = j.at("word").get<std::string>();
  for (const auto& p : j.at("prons")) {
    PhonemeSeq seq;
    for (const auto& sym : p) seq.push_back(make_phoneme(sym.get<std::string>()));
    e.prons.push_back(std::move(seq));
  }
  return e;
}

// {"center_hz": [...], "importance": [...], "internal_noise_spectrum_db": [...]}
inline SiiTable sii_table_from(const json& j) {
  const auto centers = j.at("center_hz").get<std::vector<double>>();
  const auto imp = j.at("importance").get<std::vector<double>>();
  const auto noise = j.at("internal_noise_spectrum_db").get<std::vector<double>>();
  if (centers.size() != kBands || imp.size() != kBands || noise.size() != kBands)
    throw InvalidArgument("SII table needs " + std::to_string(kBands) + " bands");
  SiiTable t;
  for (std::size_t i = 0; i < kBands; ++i) {
    if (centers[i] != kOctaveCenters[i]) throw InvalidArgument("SII table band centers differ from the octave set");
    t.importance[i] = imp[i];
    t.internal_noise_spectrum[i] = noise[i];
  }
  return t;
}

inline SiiTable load_sii_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return sii_table_from(json::parse(in));
}

template <typename T, typename Enc>
void write_jsonl(std::ostream& os, const std::vector<T>& items, Enc&& encode) {
  for (const auto& it : items) os << encode(it).dump() << '\n';
}

template <typename Dec>
auto read_jsonl(std::istream& is, Dec&& decode) {
  using T = std::decay_t<decltype(decode(std::declval<const json&>()))>;
  std::vector<T> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (util::trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw InvalidArgument("invalid JSON on line " + std::to_string(line_no));
    try {
      out.push_back(decode(j));
    } catch (const json::exception& e) {
      throw InvalidArgument("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

template <typename Dec>
auto read_jsonl_file(const std::string& path, Dec&& decode) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return read_jsonl(in, std::forward<Dec>(decode));
}

}  // namespace pairsim

#endif  // PAIRSIM_SERIALIZE_HPP_
