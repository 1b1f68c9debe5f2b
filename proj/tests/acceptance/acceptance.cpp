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

// Acceptance gate: one PASS/FAIL line per criterion. Exit status is the
// number of failing criteria.

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>

#include "pairsim/analysis.hpp"
#include "pairsim/diagnostics.hpp"
#include "pairsim/pipeline.hpp"
#include "pairsim/serialize.hpp"
#include "support/test_support.hpp"

using namespace pairsim;

namespace {

// Tolerances and budgets.
constexpr double kJIdentityTol = 1e-12;
constexpr double kJIdentitySeconds = 1.0;
constexpr std::size_t kMaxPerPattern = 3, kFinalSize = 25;
constexpr std::size_t kExhaustiveLen = 6, kExhaustiveSymbols = 5, kRandomCases = 1000, kRandomMaxLen = 12;
constexpr double kAlignSeconds = 30.0;
constexpr std::size_t kMiniTrials = 50;
constexpr double kMiniSeconds = 60.0;
constexpr std::size_t kForcedTrials = 1000;
constexpr double kForcedHi = 0.8, kForcedNh = 0.05, kSigmas = 3.0;
constexpr double kToneTolDb = 0.5, kSnrTolDb = 0.3, kIdentityTol = 1e-6;
constexpr std::size_t kSiiVectors = 10000;
constexpr double kSiiFullTol = 1e-9, kWeightTol = 1e-4, kPearsonTol = 1e-9, kPTol = 1e-6;
constexpr double kCentroidTolHz = 15.0, kFluxTol = 1e-9, kPlantedP = 0.001, kKsP = 0.01;
constexpr std::size_t kNullSims = 200;
constexpr std::size_t kCmuMinPairs = 10000;
constexpr double kCmuSeconds = 60.0;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) { return util::format_double(v); }

std::vector<FinalSetRow> reference_rows() {
  std::ifstream in(testsupport::data_dir() / "reference_set25.csv");
  if (!in) throw Error("cannot open reference_set25.csv");
  return read_final_set_csv(in);
}

Verdict j_identity() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = reference_rows();
  double worst = 0.0;
  for (const auto& r : rows) {
    const double sens = r.item.score.sensitivity.value(), spec = r.item.score.specificity.value();
    worst = std::max(worst, std::fabs(r.j_column.value() - (sens + spec - 1.0)));
  }
  const double dt = seconds_since(t0);
  return {rows.size() == 25 && worst <= kJIdentityTol && dt < kJIdentitySeconds,
          std::to_string(rows.size()) + " rows, max |J - (sens+spec-1)| = " + fmt(worst) + ", " + fmt(dt) + " s"};
}

Verdict balanced_selection() {
  std::vector<SelectionItem> pool;
  for (const auto& r : reference_rows()) pool.push_back(r.item);
  const auto res = select_balanced(pool, kFinalSize, kMaxPerPattern);
  bool ok = res.items.size() == kFinalSize;
  std::size_t most = 0;
  for (const auto& [k, v] : res.pattern_counts) most = std::max(most, v);
  ok = ok && most <= kMaxPerPattern;
  std::string detail = std::to_string(res.items.size()) + " selected, max per pattern " + std::to_string(most);
  for (const char* p : {"S->F", "T->D", "P->B", "P->K", "D->T"}) {
    const auto it = res.pattern_counts.find(p);
    const std::size_t n = it == res.pattern_counts.end() ? 0 : it->second;
    ok = ok && n == 3;
    detail += std::string(", ") + p + "=" + std::to_string(n);
  }
  return {ok, detail};
}

Verdict alignment_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t cases = 0, bad = 0;
  auto check = [&](const PhonemeSeq& a, const PhonemeSeq& b) {
    const auto want = testsupport::edit_distance_oracle(a, b);
    const auto got = align(a, b);
    if (phoneme_levenshtein(a, b) != want || got.distance != want || got != testsupport::align_oracle(a, b)) ++bad;
    ++cases;
  };
  testsupport::for_each_canonical_pair(kExhaustiveLen, kExhaustiveSymbols, check);
  const std::size_t exhaustive = cases;
  Rng rng(2024);
  for (std::size_t i = 0; i < kRandomCases; ++i) {
    PhonemeSeq a(rng.below(kRandomMaxLen + 1)), b(rng.below(kRandomMaxLen + 1));
    for (auto& p : a) p = phoneme_at(rng.below(kPhonemeCount));
    for (auto& p : b) p = phoneme_at(rng.below(kPhonemeCount));
    // Mutate a copy half the time so near-identical pairs are common.
    if (rng.below(2) && !a.empty()) {
      b = a;
      b[rng.below(b.size())] = phoneme_at(rng.below(kPhonemeCount));
      if (rng.below(2)) b.erase(b.begin() + static_cast<long>(rng.below(b.size())));
    }
    check(a, b);
  }
  const double dt = seconds_since(t0);
  return {bad == 0 && dt < kAlignSeconds, std::to_string(exhaustive) + " exhaustive + " +
                                              std::to_string(cases - exhaustive) + " random cases, " +
                                              std::to_string(bad) + " disagreements, " + fmt(dt) + " s"};
}

struct MiniRun {
  std::string bytes;  // every artifact, concatenated
  double hi_mean = 0.0, nh_mean = 0.0;
  std::size_t selected = 0;
};

MiniRun mini_pipeline() {
  const auto lex = testsupport::mini_lexicon();
  const LexiconDecoder dec(lex);
  const ListenerContext ctx{&lex, &dec, nullptr};
  DegradationSpec mild;
  mild.profile = mild_profile();
  mild.snr_db = 10;
  const auto hi = phoneme_listener("hi", mild);  // severity map
  const auto nh = phoneme_listener("nh", DegradationSpec{}, zero_channel());
  const std::uint64_t seed = 42;

  std::vector<std::string> words;
  for (const auto& e : lex.entries()) words.push_back(e.word);
  const auto harvest = harvest_confusions(ctx, words, nh, hi, seed);
  auto patterns = rank_patterns(harvest.records);
  if (patterns.size() > 5) patterns.resize(5);
  if (patterns.empty()) throw Error("harvest produced no substitutions");
  const auto pairs = mine_minimal_pairs(lex, patterns);
  const auto validation = validate_pairs(ctx, pairs, nh, hi, seed);
  std::vector<MinimalPair> validated;
  for (const auto& v : validation.verdicts)
    if (v.validated()) validated.push_back(v.pair);
  const auto logs = run_all_trials(ctx, validated, kMiniTrials, nh, hi, seed);
  std::vector<SelectionItem> pool;
  for (const auto& l : logs) pool.push_back(selection_item(l));
  const auto sel = select_balanced(pool, kFinalSize, kMaxPerPattern);

  std::ostringstream out;
  write_jsonl(out, harvest.records, record_json);
  write_jsonl(out, pairs, pair_json);
  write_verdicts_csv(out, validation.verdicts);
  write_jsonl(out, logs, trial_log_json);
  write_scores_csv(out, logs);
  write_final_set_csv(out, sel.items);
  return {out.str(), mean_distance(harvest.hi_alignments), mean_distance(harvest.nh_alignments), sel.items.size()};
}

Verdict mini_pipeline_check() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto a = mini_pipeline();
  const auto b = mini_pipeline();
  const double dt = seconds_since(t0);
  const bool same = a.bytes == b.bytes;
  return {same && a.hi_mean > a.nh_mean && a.selected > 0 && dt < kMiniSeconds,
          std::string(same ? "byte-identical" : "runs differ") + " (" + std::to_string(a.bytes.size()) +
              " bytes), final set " + std::to_string(a.selected) + ", mean distance HI " + fmt(a.hi_mean) +
              " vs NH " + fmt(a.nh_mean) + ", " + fmt(dt) + " s for two runs"};
}

Verdict forced_channels() {
  const auto lex = testsupport::mini_lexicon();
  const LexiconDecoder dec(lex);
  const ListenerContext ctx{&lex, &dec, nullptr};
  const auto pairs = mine_minimal_pairs(lex, {parse_pattern("S->F")});
  const auto it = std::find_if(pairs.begin(), pairs.end(), [](const auto& p) { return p.stimulus == "sealing"; });
  if (it == pairs.end()) return {false, "sealing~feeling not in the lexicon"};
  auto channel = [](double p) {
    auto c = zero_channel();
    c.sub_probs[{Phoneme::S, Phoneme::F}] = p;
    return c;
  };
  const auto hi = phoneme_listener("hi", DegradationSpec{}, channel(kForcedHi));
  const auto nh = phoneme_listener("nh", DegradationSpec{}, channel(kForcedNh));
  const auto s = score(run_trials(ctx, *it, Direction::kForward, kForcedTrials, nh, hi, 7));
  const double n = static_cast<double>(kForcedTrials);
  const double want_spec = 1.0 - kForcedNh, want_j = kForcedHi + want_spec - 1.0;
  const double sd_sens = std::sqrt(kForcedHi * (1 - kForcedHi) / n);
  const double sd_spec = std::sqrt(want_spec * (1 - want_spec) / n);
  const double sd_j = std::sqrt(sd_sens * sd_sens + sd_spec * sd_spec);
  const bool ok = std::fabs(s.sensitivity.value() - kForcedHi) <= kSigmas * sd_sens &&
                  std::fabs(s.specificity.value() - want_spec) <= kSigmas * sd_spec &&
                  std::fabs(s.j.value() - want_j) <= kSigmas * sd_j;
  return {ok, "sensitivity " + fmt(s.sensitivity.value()) + " (want " + fmt(kForcedHi) + " +- " +
                  fmt(kSigmas * sd_sens) + "), specificity " + fmt(s.specificity.value()) + " (want " +
                  fmt(want_spec) + " +- " + fmt(kSigmas * sd_spec) + "), J " + fmt(s.j.value()) + " (want " +
                  fmt(want_j) + " +- " + fmt(kSigmas * sd_j) + ")"};
}

AudioBuffer tone(double hz, double amp, std::size_t n = 16000) {
  AudioBuffer a;
  a.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) a.samples[i] = amp * std::sin(2 * M_PI * hz * static_cast<double>(i) / 16000.0);
  return a;
}

Verdict hearing_dsp_check() {
  const auto profile = make_profile("hf40", {0, 0, 0, 10, 25, 40, 40});
  const auto x = tone(4000.0, 0.5);
  const double atten = 20.0 * std::log10(rms(x) / rms(apply_audiogram(x, profile)));
  bool ok = std::fabs(atten - 40.0) <= kToneTolDb;
  std::string detail = "4 kHz attenuation " + fmt(atten) + " dB";

  AudioBuffer speechy = tone(220.0, 0.3);
  const auto hf = tone(2500.0, 0.05);
  for (std::size_t i = 0; i < speechy.size(); ++i) speechy.samples[i] += hf.samples[i];
  double worst = 0.0;
  for (double snr : {10.0, 5.0, 0.0}) {
    const auto y = mix_noise(speechy, snr, NoiseKind::kSpeechShaped, 11);
    AudioBuffer n = y;
    for (std::size_t i = 0; i < n.size(); ++i) n.samples[i] -= speechy.samples[i];
    worst = std::max(worst, std::fabs(20.0 * std::log10(rms(speechy) / rms(n)) - snr));
  }
  ok = ok && worst <= kSnrTolDb;
  detail += ", worst SNR error " + fmt(worst) + " dB";

  const auto id = degrade(speechy, DegradationSpec{});
  double err = 0.0;
  for (std::size_t i = 0; i < id.size(); ++i) err += std::pow(id.samples[i] - speechy.samples[i], 2);
  const double rel = std::sqrt(err / static_cast<double>(id.size())) / rms(speechy);
  ok = ok && rel <= kIdentityTol;
  detail += ", identity relative RMS error " + fmt(rel);
  return {ok, detail};
}

Verdict sii_and_pearson() {
  Rng rng(77);
  auto levels = [&](double lo, double hi) {
    BandLevels b{};
    for (auto& v : b) v = lo + (hi - lo) * rng.uniform();
    return b;
  };
  bool bounded = true, monotone = true;
  for (std::size_t i = 0; i < kSiiVectors; ++i) {
    const auto s = levels(-50, 130), n = levels(-50, 130), t = levels(0, 100);
    const double v = compute_sii(s, n, t);
    bounded = bounded && v >= 0.0 && v <= 1.0;
    auto s2 = s, n2 = n;
    const std::size_t b = rng.below(kBands);
    s2[b] += 10.0 * rng.uniform();
    n2[b] += 10.0 * rng.uniform();
    monotone = monotone && compute_sii(s2, n, t) >= v && compute_sii(s, n2, t) <= v;
  }
  BandLevels loud, quiet, zero{};
  loud.fill(120.0);
  quiet.fill(kLevelFloorDb);
  const double full = compute_sii(loud, quiet, zero);
  const SiiTable table;
  const double wsum = std::accumulate(table.importance.begin(), table.importance.end(), 0.0);

  // y = r * x_hat + sqrt(1 - r^2) * z_hat with z orthogonalized against x.
  double worst_r = 0.0, worst_p = 0.0;
  for (double r : {-0.8, -0.2, 0.3, 0.7, 0.95}) {
    const std::size_t n = 25;
    std::vector<double> x(n), z(n);
    for (auto& v : x) v = rng.gaussian();
    for (auto& v : z) v = rng.gaussian();
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n, mz = std::accumulate(z.begin(), z.end(), 0.0) / n;
    for (auto& v : x) v -= mx;
    for (auto& v : z) v -= mz;
    const double xz = std::inner_product(x.begin(), x.end(), z.begin(), 0.0);
    const double xx = std::inner_product(x.begin(), x.end(), x.begin(), 0.0);
    for (std::size_t i = 0; i < n; ++i) z[i] -= xz / xx * x[i];
    const double zz = std::inner_product(z.begin(), z.end(), z.begin(), 0.0);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = r * x[i] / std::sqrt(xx) + std::sqrt(1 - r * r) * z[i] / std::sqrt(zz);
    const auto st = pearson(x, y);
    worst_r = std::max(worst_r, std::fabs(st.statistic - r));
    const double t = st.statistic * std::sqrt(st.df / (1 - st.statistic * st.statistic));
    worst_p = std::max(worst_p, std::fabs(st.p_value - testsupport::student_t_two_sided_oracle(t, st.df)));
  }
  const bool ok = bounded && monotone && std::fabs(full - 1.0) <= kSiiFullTol && std::fabs(wsum - 1.0) <= kWeightTol &&
                  worst_r <= kPearsonTol && worst_p <= kPTol;
  return {ok, std::string(bounded ? "bounded" : "OUT OF RANGE") + ", " + (monotone ? "monotone" : "NOT monotone") +
                  ", full audibility " + fmt(full) + ", weight sum " + fmt(wsum) + ", max r error " + fmt(worst_r) +
                  ", max p error " + fmt(worst_p)};
}

// Features for `pairs` pairs with the centroid gap between the two words
// drawn around `gap` for good pairs and `poor_gap` for poor ones.
std::vector<FeatureTest> planted(Rng& rng, double good_gap, double poor_gap, std::size_t pairs) {
  std::vector<SelectionItem> items;
  std::map<std::string, AcousticFeatures> feats;
  for (std::size_t i = 0; i < 2 * pairs; ++i) {
    const bool good = i < pairs;
    const auto s = "s" + std::to_string(i), t = "t" + std::to_string(i);
    AcousticFeatures fs, ft;
    for (auto* f : {&fs, &ft}) {
      f->spectral_skewness = rng.gaussian();
      f->spectral_kurtosis = 3 + rng.gaussian();
      f->spectral_flux = std::fabs(rng.gaussian());
      f->harmonic_ratio = rng.uniform();
    }
    fs.spectral_centroid = 1500 + 100 * rng.gaussian();
    ft.spectral_centroid = fs.spectral_centroid + (good ? good_gap : poor_gap) + 100 * rng.gaussian();
    feats[s] = fs;
    feats[t] = ft;
    items.push_back({s, t, parse_pattern("S->F"),
                     DiagnosticScore::from(good ? Fraction(9, 10) : Fraction(0, 1), Fraction(1, 1))});
  }
  return compare_good_poor(items, feats);
}

Verdict features_and_tests() {
  const auto f = acoustic_features(tone(1000.0, 0.5));
  bool ok = std::fabs(f.spectral_centroid - 1000.0) <= kCentroidTolHz && f.spectral_flux <= kFluxTol;
  Rng rng(31);
  const auto eff = planted(rng, 600.0, 0.0, 12);
  const double p_planted = eff[0].stat.p_value;
  ok = ok && p_planted < kPlantedP;
  std::vector<double> null_p;
  for (std::size_t i = 0; i < kNullSims; ++i) null_p.push_back(planted(rng, 0.0, 0.0, 12)[0].stat.p_value);
  const double ks = testsupport::ks_uniform_p(null_p);
  ok = ok && ks > kKsP;
  return {ok, "1 kHz centroid " + fmt(f.spectral_centroid) + " Hz, stationary flux " + fmt(f.spectral_flux) +
                  ", planted p " + fmt(p_planted) + ", null KS p " + fmt(ks) + " over " + std::to_string(kNullSims) +
                  " simulations"};
}

Verdict full_dictionary() {
  const auto path = testsupport::data_dir() / "cmudict" / "cmudict.dict";
  if (!std::filesystem::exists(path)) return {false, "missing " + path.string()};
  const auto t0 = std::chrono::steady_clock::now();
  const Lexicon lex(load_cmu_dict(path.string()).entries);
  std::vector<SubstitutionPattern> pats;
  for (const char* p : {"S->F", "T->D", "P->B", "P->K", "D->T"}) pats.push_back(parse_pattern(p));
  const auto pairs = mine_minimal_pairs(lex, pats);
  const double dt = seconds_since(t0);
  return {pairs.size() >= kCmuMinPairs && dt < kCmuSeconds, std::to_string(lex.size()) + " words, " +
                                                                std::to_string(pairs.size()) + " pairs, " +
                                                                fmt(dt) + " s"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"J equals sensitivity + specificity - 1 on the reference set", j_identity},
      {"balanced selection caps and reproduces pattern diversity", balanced_selection},
      {"alignment agrees with the exhaustive oracle", alignment_oracle},
      {"mini pipeline is deterministic and separates HI from NH", mini_pipeline_check},
      {"forced channels recover sensitivity, specificity and J", forced_channels},
      {"audiogram filter, SNR mixing and identity degradation", hearing_dsp_check},
      {"SII properties and correlation statistics", sii_and_pearson},
      {"spectral features and group tests", features_and_tests},
      {"full-dictionary mining scale", full_dictionary}};
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failures += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << ": " << criteria[i].first << " -- "
              << v.detail << std::endl;
  }
  return failures;
}
