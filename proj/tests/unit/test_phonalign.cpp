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
#include "pairsim/phonalign.hpp"
#include "pairsim/rng.hpp"
#include "support/test_support.hpp"

using namespace pairsim;

namespace {

PhonemeSeq random_seq(Rng& rng, std::size_t max_len, std::size_t alphabet) {
  PhonemeSeq s(rng.below(max_len + 1));
  for (auto& p : s) p = phoneme_at(rng.below(alphabet));
  return s;
}

}  // namespace

TEST_CASE("known distances") {
  CHECK(phoneme_levenshtein(parse_phonemes("S IY L IH NG"), parse_phonemes("F IY L IH NG")) == 1);
  CHECK(phoneme_levenshtein({}, parse_phonemes("K R AE B")) == 4);
  CHECK(phoneme_levenshtein(parse_phonemes("K R AE P"), parse_phonemes("K R AE P")) == 0);
  CHECK(phoneme_levenshtein(parse_phonemes("K AE T"), parse_phonemes("AE K T")) == 2);
  CHECK(string_levenshtein("kitten", "sitting") == 3);
}

TEST_CASE("backtrace tie-break is deterministic and documented") {
  // AA AE -> AE: the trailing match is taken, then the deletion.
  const auto e = align(parse_phonemes("AA AE"), parse_phonemes("AE"));
  REQUIRE(e.distance == 1);
  REQUIRE(e.ops.size() == 2);
  CHECK(e.ops[0].kind == OpKind::kDeletion);
  CHECK(e.ops[1].kind == OpKind::kMatch);

  // AA -> AE AA AE: two insertions; ending match is taken first from the end.
  const auto f = align(parse_phonemes("AA"), parse_phonemes("AE AA AE"));
  REQUIRE(f.distance == 2);
  CHECK(f.ops[0].kind == OpKind::kInsertion);
  CHECK(f.ops[1].kind == OpKind::kMatch);
  CHECK(f.ops[2].kind == OpKind::kInsertion);

  // Substitution beats deletion+insertion when both are optimal from the end.
  const auto g = align(parse_phonemes("AA AE"), parse_phonemes("AA AH"));
  REQUIRE(g.ops.size() == 2);
  CHECK(g.ops[1].kind == OpKind::kSubstitution);
  CHECK(g.ops[1].out_index == 1u);
}

TEST_CASE("exhaustive agreement with the recursive oracle, lengths up to 5 over 4 symbols") {
  std::size_t cases = 0;
  testsupport::for_each_canonical_pair(5, 4, [&](const PhonemeSeq& a, const PhonemeSeq& b) {
    const auto want = testsupport::edit_distance_oracle(a, b);
    const auto got = align(a, b);
    REQUIRE(phoneme_levenshtein(a, b) == want);
    REQUIRE(got.distance == want);
    REQUIRE(got == testsupport::align_oracle(a, b));
    ++cases;
  });
  CHECK(cases > 75000);
}

TEST_CASE("alignment properties on random sequences") {
  Rng rng(11);
  for (int i = 0; i < 3000; ++i) {
    const auto a = random_seq(rng, 10, 6), b = random_seq(rng, 10, 6), c = random_seq(rng, 10, 6);
    const auto dab = phoneme_levenshtein(a, b);
    // Metric axioms.
    REQUIRE(dab == phoneme_levenshtein(b, a));
    REQUIRE((dab == 0) == (a == b));
    REQUIRE(phoneme_levenshtein(a, c) <= dab + phoneme_levenshtein(b, c));
    REQUIRE(dab >= (a.size() > b.size() ? a.size() - b.size() : b.size() - a.size()));
    REQUIRE(dab <= std::max(a.size(), b.size()));
    // The ops are a witness: replaying them rebuilds b and costs exactly d.
    const auto e = align(a, b);
    REQUIRE(replay(a, e) == b);
    std::size_t cost = 0;
    for (const auto& op : e.ops) cost += op.kind != OpKind::kMatch;
    REQUIRE(cost == dab);
    // Indices are monotone and cover both sequences.
    std::size_t si = 0, oi = 0;
    for (const auto& op : e.ops) {
      if (op.stim_index) REQUIRE(*op.stim_index == si++);
      if (op.out_index) REQUIRE(*op.out_index == oi++);
    }
    REQUIRE(si == a.size());
    REQUIRE(oi == b.size());
  }
}

TEST_CASE("replay rejects inconsistent ops") {
  const auto a = parse_phonemes("K R AE P"), b = parse_phonemes("K R AE B");
  const auto e = align(a, b);
  CHECK_THROWS_AS(replay(parse_phonemes("K R AE"), e), InvalidArgument);
  CHECK_THROWS_AS(replay(parse_phonemes("K R AE P T"), e), InvalidArgument);
}

TEST_CASE("tally, merge and top-k") {
  std::vector<EditOps> all;
  all.push_back(align(parse_phonemes("S IY L IH NG"), parse_phonemes("F IY L IH NG")));
  all.push_back(align(parse_phonemes("S IY L"), parse_phonemes("F IY L")));
  all.push_back(align(parse_phonemes("T AA P"), parse_phonemes("D AA P")));
  all.push_back(align(parse_phonemes("K AE T S"), parse_phonemes("K AE T")));
  const auto t = tally(all);
  CHECK(t.substitutions.at({Phoneme::S, Phoneme::F}) == 2);
  CHECK(t.deletions.at(Phoneme::S) == 1);
  CHECK(t.op_count() == 4);
  CHECK(t.total_distance == 4);
  const auto top = top_k(t, OpKind::kSubstitution, 5);
  REQUIRE(top.size() == 2);
  CHECK(top[0] == RankedOp{Phoneme::S, Phoneme::F, 2});
  CHECK(top[1] == RankedOp{Phoneme::T, Phoneme::D, 1});
  CHECK(top_k(t, OpKind::kDeletion, 1).front().from == Phoneme::S);
  CHECK_THROWS_AS(top_k(t, OpKind::kMatch, 1), InvalidArgument);
  CHECK_THROWS_AS(top_k(t, OpKind::kDeletion, 0), InvalidArgument);
  CHECK(mean_distance(all) == Catch::Approx(1.0));
  CHECK_THROWS_AS(mean_distance(std::span<const EditOps>{}), InvalidArgument);

  // Merge is associative and commutative.
  Rng rng(3);
  std::vector<EditOps> more;
  for (int i = 0; i < 60; ++i) more.push_back(align(random_seq(rng, 6, 5), random_seq(rng, 6, 5)));
  const auto whole = tally(more);
  OpTally x = tally(std::span<const EditOps>(more).subspan(0, 20));
  OpTally y = tally(std::span<const EditOps>(more).subspan(20, 25));
  OpTally z = tally(std::span<const EditOps>(more).subspan(45));
  OpTally xy = x;
  xy.merge(y);
  xy.merge(z);
  OpTally zy = z;
  zy.merge(y);
  zy.merge(x);
  CHECK(xy == whole);
  CHECK(zy == whole);
}

TEST_CASE("top-k ties break in ARPAbet order") {
  OpTally t;
  t.substitutions[{Phoneme::T, Phoneme::D}] = 3;
  t.substitutions[{Phoneme::B, Phoneme::P}] = 3;
  t.substitutions[{Phoneme::S, Phoneme::F}] = 5;
  const auto top = top_k(t, OpKind::kSubstitution, 3);
  CHECK(top[0].from == Phoneme::S);
  CHECK(top[1].from == Phoneme::B);
  CHECK(top[2].from == Phoneme::T);
}

TEST_CASE("confusion matrix rows and CSV") {
  std::vector<EditOps> all = {align(parse_phonemes("S IY"), parse_phonemes("F IY")),
                              align(parse_phonemes("S IY"), parse_phonemes("IY")),
                              align(parse_phonemes("S IY"), parse_phonemes("S IY N"))};
  const auto m = confusion_matrix(all);
  CHECK(m.counts[index_of(Phoneme::S)][index_of(Phoneme::F)] == 1);
  CHECK(m.counts[index_of(Phoneme::S)][index_of(Phoneme::S)] == 1);
  CHECK(m.deletions[index_of(Phoneme::S)] == 1);
  CHECK(m.insertions[index_of(Phoneme::N)] == 1);
  CHECK(m.row_total(Phoneme::S) == 3);
  const auto norm = m.normalized();
  double row = 0.0;
  for (double v : norm[index_of(Phoneme::S)]) row += v;
  CHECK(row == Catch::Approx(1.0));
  CHECK(norm[index_of(Phoneme::ZH)][0] == 0.0);

  std::ostringstream os;
  write_confusion_csv(os, m);
  std::istringstream in(os.str());
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    CHECK(util::split_csv(line).size() == kPhonemeCount + 2);
  }
  CHECK(lines == kPhonemeCount + 2);

  std::ostringstream ts;
  write_tally_csv(ts, tally(all));
  CHECK(ts.str() == "kind,from,to,count\ndeletion,S,,1\ninsertion,,N,1\nsubstitution,S,F,1\n");
}
