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

#include <sstream>

#include "catch_amalgamated.hpp"
#include "pairsim/serialize.hpp"
#include "support/test_support.hpp"

using namespace pairsim;

TEST_CASE("SNR encoding") {
  CHECK(snr_json(kNoNoise) == "inf");
  CHECK(snr_json(-2.5) == -2.5);
  CHECK(snr_from(json("inf")) == kNoNoise);
  CHECK(snr_from(json(nullptr)) == kNoNoise);
  CHECK(snr_from(json("10")) == 10.0);
  CHECK(snr_from(json(3)) == 3.0);
  CHECK_THROWS(snr_from(json("loud")));
}

TEST_CASE("conditions and degradation specs") {
  const auto c = parse_condition("mild@10");
  CHECK(c.profile == mild_profile());
  CHECK(c.snr_db == 10.0);
  CHECK(parse_condition("normal@inf").snr_db == kNoNoise);
  CHECK(parse_condition("profound").snr_db == kNoNoise);
  CHECK_THROWS_AS(parse_condition("nobody@0"), InvalidArgument);

  DegradationSpec d;
  d.profile = make_profile("custom", {0, 5, 10, 20, 30, 40, 50});
  d.snr_db = 3;
  d.noise_kind = NoiseKind::kWhite;
  d.noise_seed = 12345678901234ULL;
  d.order = DegradeOrder::kFilterThenNoise;
  CHECK(degradation_from(degradation_json(d)) == d);
  CHECK(degradation_from(json{{"profile", "mild"}}).profile == mild_profile());
  CHECK_THROWS_AS(degradation_from(json{{"order", "sideways"}}), InvalidArgument);
  CHECK_THROWS_AS(profile_from(json{{"anchors", {{1000, 5}}}}), InvalidArgument);
}

TEST_CASE("channel parameters from config") {
  CHECK(channel_from(json("zero")).is_zero());
  CHECK_THROWS_AS(channel_from(json("loud")), InvalidArgument);
  const auto c = channel_from(json::parse(R"({"sub_probs": {"S->F": 0.8, "T -> D": 0.1},
                                              "del_probs": {"S": 0.1}, "ins_prob": 0.01})"));
  CHECK(c.sub_prob(Phoneme::S, Phoneme::F) == 0.8);
  CHECK(c.sub_prob(Phoneme::T, Phoneme::D) == 0.1);
  CHECK(c.del_probs[index_of(Phoneme::S)] == 0.1);
  CHECK(c.ins_prob == 0.01);
  CHECK(channel_from(channel_json(c)) == c);
  CHECK_THROWS_AS(channel_from(json::parse(R"({"sub_probs": {"S->F": 1.5}})")), InvalidArgument);
}

TEST_CASE("pairs, records and trial logs round trip") {
  const auto lex = testsupport::mini_lexicon();
  const auto pairs = mine_minimal_pairs(lex, {parse_pattern("S->F"), parse_pattern("P->B")});
  REQUIRE_FALSE(pairs.empty());
  for (const auto& p : pairs) REQUIRE(pair_from(pair_json(p)) == p);
  auto bad = pair_json(pairs[0]);
  bad["position"] = 40;
  CHECK_THROWS_AS(pair_from(bad), InvalidArgument);

  ConfusionRecord r;
  r.stimulus_word = "sealing";
  r.nh_output = "sealing";
  r.hi_output = "feeling";
  r.stimulus_pron = parse_phonemes("S IY L IH NG");
  r.hi_pron = parse_phonemes("F IY L IH NG");
  r.alignment = align(r.stimulus_pron, *r.hi_pron);
  r.trial_seed = 0xfeedfacecafebeefULL;
  CHECK(record_from(record_json(r)) == r);
  r.hi_pron.reset();
  r.alignment.reset();
  r.hi_output = "";
  CHECK(record_from(record_json(r)) == r);

  TrialLog log{pairs[0], Direction::kReverse, 2, {}, {}};
  log.nh_results = {{"sealing", parse_phonemes("S IY L IH NG"), Choice::kStimulus, 1, 0},
                    {"", std::nullopt, Choice::kStimulus, 2, 0}};
  log.hi_results = {{"feeling", parse_phonemes("F IY L IH NG"), Choice::kTarget, 3, 0},
                    {"zzz", std::nullopt, Choice::kTarget, 4, 0}};
  const auto j = trial_log_json(log);
  CHECK(j["stimulus"] == log.reading().stimulus);
  CHECK(trial_log_from(j) == log);
  auto short_log = j;
  short_log["n_trials"] = 3;
  CHECK_THROWS_AS(trial_log_from(short_log), InvalidArgument);
}

TEST_CASE("lexicon entries and JSON-lines") {
  const auto lex = testsupport::lexicon_from("READ  R EH1 D\nREAD(1)  R IY1 D\nCRAB  K R AE1 B\n");
  std::ostringstream os;
  write_jsonl(os, lex.entries(), lex_entry_json);
  CHECK(os.str().find(R"({"prons":[["K","R","AE","B"]],"word":"crab"})") != std::string::npos);
  std::istringstream in(os.str() + "\n  \n");
  const auto back = read_jsonl(in, lex_entry_from);
  REQUIRE(back.size() == lex.size());
  for (std::size_t i = 0; i < back.size(); ++i) CHECK(back[i] == lex.entries()[i]);

  std::istringstream broken("{\"word\": \"x\", \"prons\": []}\nnot json\n");
  CHECK_THROWS_AS(read_jsonl(broken, lex_entry_from), InvalidArgument);
  std::istringstream missing("{\"prons\": []}\n");
  CHECK_THROWS_AS(read_jsonl(missing, lex_entry_from), InvalidArgument);
  CHECK_THROWS_AS(read_jsonl_file("/nonexistent/file.jsonl", lex_entry_from), Error);
}
