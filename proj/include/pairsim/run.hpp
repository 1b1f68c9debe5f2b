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

// Phase drivers over a run directory, plus manifests and replay.
//
// Every phase reads its inputs from the run directory (or the config),
// writes its outputs into a staging directory and moves them into place only
// when the phase succeeds. A manifest_<phase>.json records the resolved
// config, its SHA-256 digest and the digests of every input and output.

#ifndef PAIRSIM_RUN_HPP_
#define PAIRSIM_RUN_HPP_

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <openssl/evp.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pairsim/adapter.hpp"
#include "pairsim/analysis.hpp"
#include "pairsim/diagnostics.hpp"
#include "pairsim/hearing_dsp.hpp"
#include "pairsim/lexicon.hpp"
#include "pairsim/listeners.hpp"
#include "pairsim/phonalign.hpp"
#include "pairsim/pipeline.hpp"
#include "pairsim/serialize.hpp"

namespace pairsim {

namespace fs = std::filesystem;

inline constexpr const char* kEngineVersion = "0.1.0";

// Bad invocation: missing inputs or an unusable config.
class UsageError : public Error {
 public:
  using Error::Error;
};

inline std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

inline std::string file_sha256(const fs::path& p) { return sha256_hex(read_text_file(p.string())); }

inline void write_file(const fs::path& p, std::string_view data) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error("write failed: " + p.string());
}

// Defaults for every parameter a phase reads. The resolved config (these
// merged with the user's file and flags) is what manifests digest.
inline json default_config() {
  return json::parse(R"({
    "seed": 42,
    "jobs": 1,
    "lexicon": "data/mini_lexicon.dict",
    "filter": {"min_word_len": 0, "max_word_len": 0, "min_pron_len": 0, "max_pron_len": 0,
               "allow_apostrophe": false, "allow_hyphen": false, "denylist": []},
    "listener": "phoneme",
    "nh": {"profile": "normal", "snr_db": "inf", "noise_kind": "speech_shaped"},
    "hi": {"profile": "mild", "snr_db": 10, "noise_kind": "speech_shaped"},
    "harvest": {"words": null, "limit": 0},
    "mine": {"top_patterns": 5, "patterns": []},
    "validate": {"trials": 1},
    "diagnose": {"trials": 50, "source": "validated"},
    "select": {"size": 25, "max_per_pattern": 3},
    "analysis": {"profile": "mild", "snr_db": 10, "noise_kind": "speech_shaped",
                 "j_good": 0.5, "j_poor": 0.1, "variance": "pooled"},
    "audio": {"dir": null},
    "adapters": {"tts": null, "asr": null, "pool_size": 1, "timeout_ms": 10000},
    "serve": {"host": "127.0.0.1", "port": 8080, "curation_condition": "moderate@0",
              "test_condition": "mild@10"}
  })");
}

// Recursive merge; objects merge key-wise, everything else replaces.
inline void merge_config(json& base, const json& patch) {
  if (!patch.is_object()) throw UsageError("config must be a JSON object");
  for (const auto& [k, v] : patch.items()) {
    if (v.is_object() && base.contains(k) && base[k].is_object()) {
      merge_config(base[k], v);
    } else {
      base[k] = v;
    }
  }
}

struct RunConfig {
  json resolved;
  std::uint64_t seed = 42;
  std::size_t jobs = 1;
  std::string lexicon_path;
  FilterRules filter;
  bool audio_mode = false;
  DegradationSpec nh, hi;
  std::optional<ChannelParams> nh_channel, hi_channel;

  static RunConfig from_json(const json& j) {
    RunConfig c;
    c.resolved = j;
    try {
      c.seed = j.at("seed").get<std::uint64_t>();
      c.jobs = std::max<std::size_t>(1, j.at("jobs").get<std::size_t>());
      c.lexicon_path = j.at("lexicon").get<std::string>();
      const auto& f = j.at("filter");
      c.filter.min_word_len = f.value("min_word_len", std::size_t{0});
      c.filter.max_word_len = f.value("max_word_len", std::size_t{0});
      c.filter.min_pron_len = f.value("min_pron_len", std::size_t{0});
      c.filter.max_pron_len = f.value("max_pron_len", std::size_t{0});
      c.filter.allow_apostrophe = f.value("allow_apostrophe", false);
      c.filter.allow_hyphen = f.value("allow_hyphen", false);
      for (const auto& w : f.value("denylist", json::array())) c.filter.denylist.insert(w.get<std::string>());
      const auto mode = j.at("listener").get<std::string>();
      if (mode != "phoneme" && mode != "audio") throw InvalidArgument("listener must be phoneme or audio");
      c.audio_mode = mode == "audio";
      c.nh = degradation_from(j.at("nh"));
      c.hi = degradation_from(j.at("hi"));
      if (j.at("nh").contains("channel")) c.nh_channel = channel_from(j["nh"]["channel"]);
      if (j.at("hi").contains("channel")) c.hi_channel = channel_from(j["hi"]["channel"]);
    } catch (const std::exception& e) {
      throw UsageError(std::string("config: ") + e.what());
    }
    return c;
  }

  std::string digest() const { return sha256_hex(resolved.dump()); }

  template <typename T>
  T get(const char* section, const char* key) const {
    try {
      return resolved.at(section).at(key).get<T>();
    } catch (const json::exception& e) {
      throw InvalidArgument(std::string("config ") + section + "." + key + ": " + e.what());
    }
  }

  ListenerSpec nh_listener() const {
    return audio_mode ? audio_listener("nh", "tts", "asr", nh) : phoneme_listener("nh", nh, nh_channel);
  }
  ListenerSpec hi_listener() const {
    return audio_mode ? audio_listener("hi", "tts", "asr", hi) : phoneme_listener("hi", hi, hi_channel);
  }
};

// Parses the config file (if any), applies it over the defaults, resolves
// the lexicon path to an absolute one and applies flag overrides last.
inline json resolve_config(const std::optional<std::string>& path, const json& overrides = json::object()) {
  json cfg = default_config();
  fs::path base = fs::current_path();
  if (path) {
    const auto text = read_text_file(*path);
    json user = json::parse(text, nullptr, false);
    if (user.is_discarded()) throw UsageError("config " + *path + " is not valid JSON");
    merge_config(cfg, user);
    base = fs::absolute(*path).parent_path();
  }
  merge_config(cfg, overrides);
  auto resolve = [&](json& slot) {
    if (slot.is_string()) {
      fs::path p = slot.get<std::string>();
      if (p.is_relative()) {
        // Relative to the config file first, then to the working directory.
        // A "data/..." path may also be found under $PAIRSIM_DATA_DIR.
        fs::path cand = base / p;
        if (!fs::exists(cand) && fs::exists(fs::current_path() / p)) cand = fs::current_path() / p;
        const char* data_dir = std::getenv("PAIRSIM_DATA_DIR");
        if (!fs::exists(cand) && data_dir && *p.begin() == "data") {
          const fs::path alt = fs::path(data_dir) / fs::relative(p, "data");
          if (fs::exists(alt)) cand = alt;
        }
        p = cand;
      }
      slot = fs::weakly_canonical(p).string();
    }
  };
  resolve(cfg["lexicon"]);
  resolve(cfg["harvest"]["words"]);
  resolve(cfg["audio"]["dir"]);
  return cfg;
}

// Exclusive advisory lock on <dir>/.pairsim.lock for the object's lifetime.
class RunLock {
 public:
  explicit RunLock(const fs::path& dir) {
    fs::create_directories(dir);
    const auto p = (dir / ".pairsim.lock").string();
    fd_ = ::open(p.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error("cannot open lock file " + p);
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      throw Error("run directory " + dir.string() + " is locked by another process");
    }
  }
  ~RunLock() {
    if (fd_ >= 0) {
      ::flock(fd_, LOCK_UN);
      ::close(fd_);
    }
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  int fd_ = -1;
};

// Shared state a phase needs: lexicon, decoder and (audio mode) adapters.
class Workspace {
 public:
  explicit Workspace(const RunConfig& cfg) : cfg_(cfg) {}

  const Lexicon& lexicon() {
    if (!lexicon_) {
      auto parsed = load_cmu_dict(cfg_.lexicon_path);
      lexicon_ = std::make_unique<Lexicon>(filter_lexicon(parsed.entries, cfg_.filter));
      decoder_ = std::make_unique<LexiconDecoder>(*lexicon_);
    }
    return *lexicon_;
  }

  AdapterRegistry& adapters() {
    if (!adapters_) {
      adapters_ = std::make_unique<AdapterRegistry>();
      const auto& a = cfg_.resolved.at("adapters");
      const auto timeout = std::chrono::milliseconds(a.value("timeout_ms", 10000));
      const auto pool = a.value("pool_size", std::size_t{1});
      for (const char* role : {"tts", "asr"}) {
        if (!a.contains(role) || a[role].is_null()) continue;
        AdapterConfig ac;
        ac.command = a[role].get<std::vector<std::string>>();
        ac.role = std::string(role) == "tts" ? AdapterRole::kTts : AdapterRole::kAsr;
        ac.timeout = timeout;
        ac.pool_size = pool;
        adapters_->add(role, ac);
      }
    }
    return *adapters_;
  }

  bool has_tts() const {
    const auto& a = cfg_.resolved.at("adapters");
    return a.contains("tts") && !a["tts"].is_null();
  }

  ListenerContext context() {
    ListenerContext ctx;
    ctx.lexicon = &lexicon();
    ctx.decoder = decoder_.get();
    if (cfg_.audio_mode) ctx.adapters = &adapters();
    return ctx;
  }

  // Clean rendition of `word`: <audio.dir>/<word>.wav when present, else the
  // TTS adapter. Either way a copy is cached under <run>/audio/clean.
  AudioBuffer clean_audio(const std::string& word, const fs::path& run_dir) {
    const fs::path cached = run_dir / "audio" / "clean" / (word + ".wav");
    if (fs::exists(cached)) return read_wav(cached.string());
    const auto& dir = cfg_.resolved.at("audio").at("dir");
    AudioBuffer a;
    if (dir.is_string() && fs::exists(fs::path(dir.get<std::string>()) / (word + ".wav"))) {
      a = read_wav((fs::path(dir.get<std::string>()) / (word + ".wav")).string());
    } else if (has_tts()) {
      a = adapters().synth_cached("tts", word);
    } else {
      throw Error("no audio for '" + word + "': set audio.dir or adapters.tts");
    }
    // Store what a re-read would return so later reads are bit-identical.
    const std::string bytes = encode_wav(a);
    write_file(cached, bytes);
    return decode_wav(bytes);
  }

  const RunConfig& config() const { return cfg_; }

 private:
  const RunConfig& cfg_;
  std::unique_ptr<Lexicon> lexicon_;
  std::unique_ptr<LexiconDecoder> decoder_;
  std::unique_ptr<AdapterRegistry> adapters_;
};

// Outputs are written under `staging` and listed relative to it.
struct PhaseIo {
  fs::path run_dir;  // where inputs are read
  fs::path staging;  // where outputs are written
  std::vector<fs::path> inputs;
  std::vector<std::string> outputs;

  fs::path input(const std::string& rel) {
    fs::path p = run_dir / rel;
    if (!fs::exists(p)) throw UsageError("missing input " + p.string() + " (run the producing phase first)");
    inputs.push_back(p);
    return p;
  }
  void external_input(const fs::path& p) {
    if (!fs::exists(p)) throw UsageError("missing input " + p.string());
    inputs.push_back(p);
  }
  void output(const std::string& rel, std::string_view data) {
    write_file(staging / rel, data);
    outputs.push_back(rel);
  }
};

struct PhaseSummary {
  json info = json::object();
};

namespace phases {

inline std::vector<std::string> harvest_words(const RunConfig& cfg, const Lexicon& lex, PhaseIo& io) {
  std::vector<std::string> words;
  const auto& w = cfg.resolved.at("harvest").at("words");
  if (w.is_string()) {
    io.external_input(w.get<std::string>());
    std::istringstream in(read_text_file(w.get<std::string>()));
    std::string line;
    while (std::getline(in, line)) {
      auto t = util::trim(line);
      if (!t.empty() && t[0] != '#') words.push_back(util::to_lower(t));
    }
  } else if (w.is_array()) {
    for (const auto& x : w) words.push_back(util::to_lower(x.get<std::string>()));
  } else {
    for (const auto& e : lex.entries()) words.push_back(e.word);
    std::sort(words.begin(), words.end());
  }
  const auto limit = cfg.get<std::size_t>("harvest", "limit");
  if (limit && words.size() > limit) words.resize(limit);
  return words;
}

// Normalized, filtered lexicon as JSON-lines, with parse diagnostics.
inline PhaseSummary lexicon(Workspace& ws, PhaseIo& io) {
  const auto& cfg = ws.config();
  io.external_input(cfg.lexicon_path);
  const auto parsed = load_cmu_dict(cfg.lexicon_path);
  const auto& lex = ws.lexicon();
  std::ostringstream jl;
  write_jsonl(jl, lex.entries(), lex_entry_json);
  io.output("lexicon.jsonl", jl.str());
  json diag = {{"entries_parsed", parsed.entries.size()},
               {"entries_kept", lex.size()},
               {"malformed_lines", parsed.malformed_lines},
               {"filtered_words", parsed.filtered_words},
               {"diagnostics", json::array()}};
  for (const auto& d : parsed.diagnostics) diag["diagnostics"].push_back({{"line", d.line}, {"message", d.message}});
  io.output("lexicon_summary.json", diag.dump(2) + "\n");
  return {{{"entries", lex.size()}, {"malformed_lines", parsed.malformed_lines}}};
}

inline PhaseSummary harvest(Workspace& ws, PhaseIo& io) {
  const auto& cfg = ws.config();
  io.external_input(cfg.lexicon_path);
  const auto& lex = ws.lexicon();
  const auto words = harvest_words(cfg, lex, io);
  const auto res = harvest_confusions(ws.context(), words, cfg.nh_listener(), cfg.hi_listener(), cfg.seed, cfg.jobs);

  std::ostringstream records;
  write_jsonl(records, res.records, record_json);
  io.output("harvest.jsonl", records.str());

  const auto ranked = rank_patterns(res.records);
  std::ostringstream pat;
  pat << "rank,pattern,count\n";
  for (std::size_t i = 0; i < ranked.size(); ++i)
    pat << i + 1 << ',' << to_string(ranked[i]) << ',' << ranked[i].count << '\n';
  io.output("patterns.csv", pat.str());

  std::ostringstream cm, hi_t, nh_t;
  write_confusion_csv(cm, confusion_matrix(res.hi_alignments));
  io.output("hi_confusion_matrix.csv", cm.str());
  write_tally_csv(hi_t, tally(res.hi_alignments));
  io.output("hi_tally.csv", hi_t.str());
  write_tally_csv(nh_t, tally(res.nh_alignments));
  io.output("nh_tally.csv", nh_t.str());

  json summary = {{"words", words.size()},
                  {"words_processed", res.words_processed},
                  {"records", res.records.size()},
                  {"skipped", json::array()},
                  {"hi_mean_distance", res.hi_alignments.empty() ? json(nullptr)
                                                                 : json(mean_distance(res.hi_alignments))},
                  {"nh_mean_distance", res.nh_alignments.empty() ? json(nullptr)
                                                                 : json(mean_distance(res.nh_alignments))}};
  for (const auto& s : res.skipped) summary["skipped"].push_back({{"word", s.word}, {"error", s.error}});
  io.output("harvest_summary.json", summary.dump(2) + "\n");
  return {{{"records", res.records.size()}, {"skipped", res.skipped.size()}}};
}

inline std::vector<SubstitutionPattern> read_patterns_csv(const fs::path& p) {
  std::istringstream in(read_text_file(p.string()));
  std::string line;
  std::getline(in, line);
  std::vector<SubstitutionPattern> out;
  while (std::getline(in, line)) {
    if (util::trim(line).empty()) continue;
    const auto f = util::split_csv(line);
    if (f.size() != 3) throw InvalidArgument("malformed patterns.csv line: " + line);
    auto pat = parse_pattern(f[1]);
    pat.count = static_cast<std::uint64_t>(std::stoull(f[2]));
    out.push_back(pat);
  }
  return out;
}

inline void write_pairs(PhaseIo& io, const std::string& stem, const std::vector<MinimalPair>& pairs) {
  std::ostringstream jl, csv;
  write_jsonl(jl, pairs, pair_json);
  io.output(stem + ".jsonl", jl.str());
  csv << "id,stimulus,confusion,pattern,position,stimulus_pron,confusion_pron\n";
  for (const auto& p : pairs)
    csv << p.id() << ',' << p.stimulus << ',' << p.confusion << ',' << to_string(p.pattern) << ',' << p.position
        << ',' << to_string(p.stimulus_pron) << ',' << to_string(p.confusion_pron) << '\n';
  io.output(stem + ".csv", csv.str());
}

inline PhaseSummary mine(Workspace& ws, PhaseIo& io) {
  const auto& cfg = ws.config();
  io.external_input(cfg.lexicon_path);
  const auto& lex = ws.lexicon();
  std::vector<SubstitutionPattern> patterns;
  for (const auto& p : cfg.resolved.at("mine").at("patterns")) patterns.push_back(parse_pattern(p.get<std::string>()));
  if (patterns.empty()) {
    patterns = read_patterns_csv(io.input("patterns.csv"));
    const auto top = cfg.get<std::size_t>("mine", "top_patterns");
    if (top && patterns.size() > top) patterns.resize(top);
  }
  if (patterns.empty()) throw Error("mine: no substitution patterns (harvest found no substitutions)");
  const auto pairs = mine_minimal_pairs(lex, patterns);
  write_pairs(io, "pairs", pairs);
  json used = json::array();
  for (const auto& p : patterns) used.push_back(to_string(p));
  return {{{"pairs", pairs.size()}, {"patterns", used}}};
}

inline PhaseSummary validate(Workspace& ws, PhaseIo& io) {
  const auto& cfg = ws.config();
  io.external_input(cfg.lexicon_path);
  const auto pairs = read_jsonl_file(io.input("pairs.jsonl").string(), pair_from);
  const auto run = validate_pairs(ws.context(), pairs, cfg.nh_listener(), cfg.hi_listener(), cfg.seed,
                                  cfg.get<std::size_t>("validate", "trials"), cfg.jobs);
  std::ostringstream csv;
  write_verdicts_csv(csv, run.verdicts);
  io.output("verdicts.csv", csv.str());
  std::vector<MinimalPair> ok;
  for (const auto& v : run.verdicts)
    if (v.validated()) ok.push_back(v.pair);
  std::ostringstream jl;
  write_jsonl(jl, ok, pair_json);
  io.output("validated.jsonl", jl.str());
  if (!run.skipped.empty()) {
    json sk = json::array();
    for (const auto& s : run.skipped) sk.push_back({{"pair", s.word}, {"error", s.error}});
    io.output("validate_skipped.json", sk.dump(2) + "\n");
  }
  return {{{"pairs", pairs.size()}, {"validated", ok.size()}, {"skipped", run.skipped.size()}}};
}

// Latest verdict per (pair_id, curator) from an append-only log.
inline std::map<std::pair<std::string, std::string>, json> latest_judgments(const fs::path& log) {
  std::map<std::pair<std::string, std::string>, json> out;
  if (!fs::exists(log)) return out;
  for (auto& j : read_jsonl_file(log.string(), [](const json& x) { return x; }))
    out[{j.at("pair_id").get<std::string>(), j.value("curator", "")}] = j;
  return out;
}

// A pair is useful when every curator's latest verdict on it is "useful".
inline std::set<std::string> useful_pairs(const fs::path& log) {
  std::map<std::string, bool> ok;
  for (const auto& [key, j] : latest_judgments(log)) {
    const bool useful = j.at("verdict").get<std::string>() == "useful";
    auto [it, fresh] = ok.try_emplace(key.first, useful);
    if (!fresh) it->second = it->second && useful;
  }
  std::set<std::string> out;
  for (const auto& [id, u] : ok)
    if (u) out.insert(id);
  return out;
}

inline PhaseSummary diagnose(Workspace& ws, PhaseIo& io) {
  const auto& cfg = ws.config();
  io.external_input(cfg.lexicon_path);
  const auto source = cfg.get<std::string>("diagnose", "source");
  if (source != "validated" && source != "pairs") throw InvalidArgument("diagnose.source must be validated or pairs");
  auto pairs = read_jsonl_file(io.input(source + ".jsonl").string(), pair_from);
  std::size_t curated_out = 0;
  if (fs::exists(io.run_dir / "judgments.jsonl")) {
    const auto useful = useful_pairs(io.input("judgments.jsonl"));
    const auto before = pairs.size();
    std::erase_if(pairs, [&](const MinimalPair& p) { return !useful.contains(p.id()); });
    curated_out = before - pairs.size();
  }
  const auto logs = run_all_trials(ws.context(), pairs, cfg.get<std::size_t>("diagnose", "trials"),
                                   cfg.nh_listener(), cfg.hi_listener(), cfg.seed, cfg.jobs);
  std::ostringstream jl, csv;
  write_jsonl(jl, logs, trial_log_json);
  io.output("trials.jsonl", jl.str());
  write_scores_csv(csv, logs);
  io.output("scores.csv", csv.str());
  return {{{"pairs", pairs.size()}, {"directions", logs.size()}, {"removed_by_curation", curated_out}}};
}

inline std::vector<SelectionItem> read_scores_csv(const fs::path& p) {
  std::istringstream in(read_text_file(p.string()));
  std::string line;
  std::getline(in, line);
  std::vector<SelectionItem> out;
  while (std::getline(in, line)) {
    if (util::trim(line).empty()) continue;
    const auto f = util::split_csv(line);
    if (f.size() != 10) throw InvalidArgument("malformed scores.csv line: " + line);
    const auto n = static_cast<std::int64_t>(std::stoll(f[4]));
    out.push_back({f[0], f[1], parse_pattern(f[3]),
                   DiagnosticScore::from({std::stoll(f[5]), n}, {std::stoll(f[6]), n})});
  }
  return out;
}

inline PhaseSummary select(Workspace& ws, PhaseIo& io) {
  const auto& cfg = ws.config();
  const auto pool = read_scores_csv(io.input("scores.csv"));
  const auto res =
      select_balanced(pool, cfg.get<std::size_t>("select", "size"), cfg.get<std::size_t>("select", "max_per_pattern"));
  std::ostringstream fin, audit;
  write_final_set_csv(fin, res.items);
  io.output("final_set.csv", fin.str());
  audit << "rank,stimulus,target,pattern,j,sensitivity,action,pattern_count\n";
  for (std::size_t i = 0; i < res.audit.size(); ++i) {
    const auto& a = res.audit[i];
    audit << i + 1 << ',' << a.item.stimulus << ',' << a.item.target << ',' << to_string(a.item.pattern) << ','
          << to_string(a.item.score.j) << ',' << to_string(a.item.score.sensitivity) << ',' << to_string(a.action)
          << ',' << a.pattern_count << '\n';
  }
  io.output("selection_audit.csv", audit.str());
  json counts = json::object();
  for (const auto& [k, v] : res.pattern_counts) counts[k] = v;
  return {{{"selected", res.items.size()}, {"exhausted", res.exhausted}, {"pattern_counts", counts}}};
}

// Scored directions for the analysis phases: the final set when present,
// else every diagnosed direction.
inline std::vector<SelectionItem> analysis_items(PhaseIo& io) {
  if (fs::exists(io.run_dir / "final_set.csv")) {
    std::istringstream in(read_text_file(io.input("final_set.csv").string()));
    std::vector<SelectionItem> out;
    for (auto& r : read_final_set_csv(in)) out.push_back(r.item);
    return out;
  }
  return read_scores_csv(io.input("scores.csv"));
}

inline NoiseSpec analysis_noise(const RunConfig& cfg) {
  const auto& a = cfg.resolved.at("analysis");
  NoiseSpec n;
  n.snr_db = snr_from(a.value("snr_db", json("inf")));
  n.kind = parse_noise_kind(a.value("noise_kind", std::string("speech_shaped")));
  n.seed = trial_seed(cfg.seed, "", "analysis/noise", 0);
  return n;
}

inline PhaseSummary sii(Workspace& ws, PhaseIo& io) {
  const auto& cfg = ws.config();
  const auto items = analysis_items(io);
  const auto profile = profile_from(cfg.resolved.at("analysis").at("profile"));
  const auto noise = analysis_noise(cfg);
  std::map<std::string, SiiResult> by_word;
  std::vector<std::pair<std::string, SiiResult>> rows;
  for (const auto& it : items) {
    if (by_word.contains(it.stimulus)) continue;
    NoiseSpec n = noise;
    n.seed = trial_seed(cfg.seed, it.stimulus, "analysis/noise", 0);
    const auto r = sii_delta_for_word(ws.clean_audio(it.stimulus, io.staging.parent_path()), profile, n);
    by_word[it.stimulus] = r;
    rows.emplace_back(it.stimulus, r);
  }
  std::ostringstream csv;
  write_sii_csv(csv, rows);
  io.output("sii.csv", csv.str());
  std::vector<double> deltas, js;
  for (const auto& it : items) {
    deltas.push_back(by_word[it.stimulus].delta);
    js.push_back(it.score.j.value());
  }
  json corr = {{"n", items.size()}, {"profile", profile.name}, {"r", nullptr}, {"p", nullptr}};
  try {
    const auto st = pearson(deltas, js);
    corr["r"] = st.statistic;
    corr["p"] = st.p_value;
  } catch (const InvalidArgument& e) {
    corr["note"] = e.what();
  }
  io.output("sii_correlation.json", corr.dump(2) + "\n");
  return {{{"words", rows.size()}}};
}

inline PhaseSummary acoustics(Workspace& ws, PhaseIo& io) {
  const auto& cfg = ws.config();
  const auto items = analysis_items(io);
  std::map<std::string, AcousticFeatures> feats;
  for (const auto& it : items)
    for (const auto& w : {it.stimulus, it.target})
      if (!feats.contains(w)) feats[w] = acoustic_features(ws.clean_audio(w, io.staging.parent_path()));
  std::ostringstream fcsv;
  fcsv << "word";
  for (auto n : kFeatureNames) fcsv << ',' << n;
  fcsv << '\n';
  for (const auto& [w, f] : feats) {
    fcsv << w;
    for (std::size_t i = 0; i < 5; ++i) fcsv << ',' << util::format_double(feature_value(f, i));
    fcsv << '\n';
  }
  io.output("features.csv", fcsv.str());
  const auto& a = cfg.resolved.at("analysis");
  const auto model = a.value("variance", std::string("pooled")) == "welch" ? VarianceModel::kWelch
                                                                           : VarianceModel::kPooled;
  const auto tests = compare_good_poor(items, feats, a.value("j_good", 0.5), a.value("j_poor", 0.1), model);
  std::ostringstream tcsv;
  write_feature_tests_csv(tcsv, tests);
  io.output("feature_tests.csv", tcsv.str());
  return {{{"words", feats.size()}}};
}

inline PhaseSummary report(Workspace&, PhaseIo& io) {
  std::ostringstream md;
  md << "# Run report\n\n";
  auto section = [&](const char* title, const char* file) {
    if (!fs::exists(io.run_dir / file)) return;
    md << "## " << title << "\n\n```\n" << read_text_file(io.input(file).string()) << "```\n\n";
  };
  section("Harvest", "harvest_summary.json");
  section("Ranked substitutions", "patterns.csv");
  section("Final set", "final_set.csv");
  section("SII", "sii.csv");
  section("SII correlation", "sii_correlation.json");
  section("Feature tests", "feature_tests.csv");
  io.output("report.md", md.str());
  return {};
}

}  // namespace phases

using PhaseFn = std::function<PhaseSummary(Workspace&, PhaseIo&)>;

inline const std::map<std::string, PhaseFn>& phase_table() {
  static const std::map<std::string, PhaseFn> t = {
      {"lexicon", phases::lexicon},   {"harvest", phases::harvest}, {"mine", phases::mine}, {"validate", phases::validate},
      {"diagnose", phases::diagnose}, {"select", phases::select}, {"sii", phases::sii},
      {"acoustics", phases::acoustics}, {"report", phases::report}};
  return t;
}

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string manifest_path_rel(const fs::path& path, const fs::path& run_dir) {
  const auto rel = fs::relative(path, run_dir);
  if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
  return fs::absolute(path).string();
}

struct PhaseOutcome {
  json manifest;
  PhaseSummary summary;
};

// Runs `phase` against `run_dir`, writing outputs to `out_dir` (normally the
// same directory). Partial outputs are removed when the phase fails.
inline PhaseOutcome run_phase(const std::string& phase, const RunConfig& cfg, const fs::path& run_dir,
                              std::optional<fs::path> out_dir = std::nullopt) {
  const auto& table = phase_table();
  auto it = table.find(phase);
  if (it == table.end()) throw InvalidArgument("unknown phase '" + phase + "'");
  const fs::path out = out_dir.value_or(run_dir);
  fs::create_directories(out);
  RunLock lock(out);
  PhaseIo io;
  io.run_dir = run_dir;
  io.staging = out / (".staging-" + phase + "-" + std::to_string(::getpid()));
  fs::remove_all(io.staging);
  fs::create_directories(io.staging);
  Workspace ws(cfg);
  PhaseSummary summary;
  try {
    summary = it->second(ws, io);
    for (const auto& rel : io.outputs) {
      fs::create_directories((out / rel).parent_path());
      fs::rename(io.staging / rel, out / rel);
    }
    fs::remove_all(io.staging);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(io.staging, ec);
    throw;
  }
  json m = {{"run_id", phase + "-" + cfg.digest().substr(0, 12)},
            {"created_at", utc_now()},
            {"engine_version", kEngineVersion},
            {"phase", phase},
            {"mode", cfg.audio_mode ? "audio" : "phoneme"},
            {"config", cfg.resolved},
            {"config_digest", cfg.digest()},
            {"seeds", {{"run_seed", cfg.seed}}},
            {"summary", summary.info},
            {"inputs", json::array()},
            {"outputs", json::array()}};
  std::set<std::string> seen;
  for (const auto& p : io.inputs) {
    const auto key = manifest_path_rel(p, run_dir);
    if (seen.insert(key).second) m["inputs"].push_back({{"path", key}, {"sha256", file_sha256(p)}});
  }
  for (const auto& rel : io.outputs) m["outputs"].push_back({{"path", rel}, {"sha256", file_sha256(out / rel)}});
  write_file(out / ("manifest_" + phase + ".json"), m.dump(2) + "\n");
  return {m, summary};
}

struct ReplayReport {
  bool identical = true;
  std::vector<std::string> mismatches;  // "<path>: <why>"
};

// Re-executes a manifest's phase from its recorded config into `scratch`
// and compares every output digest with the recorded one.
inline ReplayReport replay_manifest(const fs::path& manifest_path, const fs::path& scratch) {
  json m = json::parse(read_text_file(manifest_path.string()), nullptr, false);
  if (m.is_discarded() || !m.is_object()) throw InvalidArgument("manifest is not valid JSON");
  const fs::path run_dir = fs::absolute(manifest_path).parent_path();
  const auto cfg = RunConfig::from_json(m.at("config"));
  if (cfg.digest() != m.at("config_digest").get<std::string>())
    throw Error("manifest config digest does not match its config");
  ReplayReport rep;
  for (const auto& in : m.at("inputs")) {
    fs::path p = in.at("path").get<std::string>();
    if (p.is_relative()) p = run_dir / p;
    if (!fs::exists(p) || file_sha256(p) != in.at("sha256").get<std::string>()) {
      rep.identical = false;
      rep.mismatches.push_back(in.at("path").get<std::string>() + ": input changed or missing");
    }
  }
  if (!rep.identical) return rep;
  fs::remove_all(scratch);
  const auto outcome = run_phase(m.at("phase").get<std::string>(), cfg, run_dir, scratch);
  std::map<std::string, std::string> fresh;
  for (const auto& o : outcome.manifest.at("outputs")) fresh[o.at("path")] = o.at("sha256");
  for (const auto& o : m.at("outputs")) {
    const auto path = o.at("path").get<std::string>();
    auto f = fresh.find(path);
    if (f == fresh.end()) {
      rep.identical = false;
      rep.mismatches.push_back(path + ": not produced on replay");
    } else if (f->second != o.at("sha256").get<std::string>()) {
      rep.identical = false;
      rep.mismatches.push_back(path + ": content differs");
    }
  }
  return rep;
}

}  // namespace pairsim

#endif  // PAIRSIM_RUN_HPP_
