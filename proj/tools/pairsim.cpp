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

// pairsim: command-line driver for the pipeline phases, replay and the
// curation service. Exit status: 0 success, 1 usage error, 2 run failure.

#include <signal.h>

#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "pairsim/run.hpp"
#include "pairsim/service.hpp"

namespace {

using pairsim::json;

struct CommonFlags {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> profile;
  std::optional<std::string> snr;
  std::optional<std::size_t> trials;
  std::optional<std::string> listener;
  std::optional<std::size_t> jobs;
  std::string out = "run";
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--config,-c", f.config, "JSON config file")->check(CLI::ExistingFile);
  app->add_option("--seed", f.seed, "run seed");
  app->add_option("--profile", f.profile, "hearing-impaired profile (normal, mild, moderate, profound)");
  app->add_option("--snr", f.snr, "hearing-impaired SNR in dB, or inf");
  app->add_option("--trials", f.trials, "trials per condition");
  app->add_option("--listener", f.listener, "phoneme or audio")->check(CLI::IsMember({"phoneme", "audio"}));
  app->add_option("--jobs,-j", f.jobs, "worker threads");
  app->add_option("--out,-o", f.out, "run directory");
}

json overrides_for(const std::string& phase, const CommonFlags& f) {
  json o = json::object();
  if (f.seed) o["seed"] = *f.seed;
  if (f.jobs) o["jobs"] = *f.jobs;
  if (f.listener) o["listener"] = *f.listener;
  if (f.profile) {
    o["hi"]["profile"] = *f.profile;
    o["analysis"]["profile"] = *f.profile;
  }
  if (f.snr) {
    const json v = pairsim::snr_json(pairsim::snr_from(json(*f.snr)));
    o["hi"]["snr_db"] = v;
    o["analysis"]["snr_db"] = v;
  }
  if (f.trials) o[phase == "validate" ? "validate" : "diagnose"]["trials"] = *f.trials;
  return o;
}

int run_one(const std::string& phase, const CommonFlags& f, json extra) {
  pairsim::merge_config(extra, overrides_for(phase, f));
  const auto cfg = pairsim::RunConfig::from_json(pairsim::resolve_config(f.config, extra));
  const auto outcome = pairsim::run_phase(phase, cfg, f.out);
  json line = {{"phase", phase}, {"out", f.out}, {"summary", outcome.summary.info}};
  std::cout << line.dump() << '\n';
  return 0;
}

int serve(const CommonFlags& f, std::optional<std::string> host, std::optional<int> port) {
  json extra = json::object();
  if (host) extra["serve"]["host"] = *host;
  if (port) extra["serve"]["port"] = *port;
  pairsim::merge_config(extra, overrides_for("serve", f));
  const auto cfg = pairsim::RunConfig::from_json(pairsim::resolve_config(f.config, extra));

  sigset_t sigs;
  sigemptyset(&sigs);
  sigaddset(&sigs, SIGINT);
  sigaddset(&sigs, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &sigs, nullptr);

  pairsim::CurationService svc(cfg, f.out);
  const int bound = svc.start(cfg.get<std::string>("serve", "host"), cfg.get<int>("serve", "port"));
  std::cout << json{{"serving", cfg.get<std::string>("serve", "host")}, {"port", bound}}.dump() << std::endl;
  int sig = 0;
  sigwait(&sigs, &sig);
  svc.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pairsim: in-silico minimal-pair test design"};
  app.require_subcommand(1);

  CommonFlags common;
  std::map<std::string, CLI::App*> phase_cmds;
  const std::vector<std::pair<std::string, std::string>> phases = {
      {"lexicon", "export the filtered lexicon as JSON-lines"},
      {"harvest", "collect HI-listener confusions and rank substitutions"},
      {"mine", "mine minimal pairs for the top substitution patterns"},
      {"validate", "screen pairs with one NH/HI pass"},
      {"diagnose", "run N-trial diagnostics in both directions"},
      {"select", "pick the balanced final set"},
      {"sii", "SII change per stimulus word"},
      {"acoustics", "acoustic features and good/poor t-tests"},
      {"report", "summarize a run directory"}};
  for (const auto& [name, help] : phases) {
    auto* cmd = app.add_subcommand(name, help);
    add_common(cmd, common);
    phase_cmds[name] = cmd;
  }

  std::optional<std::string> words;
  std::optional<std::size_t> limit;
  phase_cmds["harvest"]->add_option("--words", words, "word list file (default: whole lexicon)");
  phase_cmds["harvest"]->add_option("--limit", limit, "harvest at most this many words");

  std::vector<std::string> patterns;
  std::optional<std::size_t> top;
  phase_cmds["mine"]->add_option("--patterns", patterns, "patterns such as S->F (default: harvest ranking)")
      ->delimiter(',');
  phase_cmds["mine"]->add_option("--top", top, "number of ranked patterns to mine");

  std::optional<std::size_t> max_per_pattern, size;
  phase_cmds["select"]->add_option("--max-per-pattern", max_per_pattern, "cap per substitution pattern");
  phase_cmds["select"]->add_option("--size", size, "final set size");

  std::optional<std::string> audio_dir;
  for (const char* name : {"sii", "acoustics"})
    phase_cmds[name]->add_option("--audio-dir", audio_dir, "directory of <word>.wav clean recordings");

  auto* serve_cmd = app.add_subcommand("serve", "HTTP API for curation and listening tests");
  add_common(serve_cmd, common);
  std::optional<std::string> host;
  std::optional<int> port;
  serve_cmd->add_option("--host", host, "bind address");
  serve_cmd->add_option("--port", port, "port (0 picks a free one)");

  auto* replay_cmd = app.add_subcommand("replay", "re-run a manifest and compare outputs");
  std::string manifest;
  std::string scratch;
  replay_cmd->add_option("manifest", manifest, "manifest_<phase>.json")->required()->check(CLI::ExistingFile);
  replay_cmd->add_option("--scratch", scratch, "directory for replayed outputs (default: <run>/.replay)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*serve_cmd) return serve(common, host, port);
    if (*replay_cmd) {
      const auto mpath = pairsim::fs::absolute(manifest);
      const auto dir = scratch.empty() ? mpath.parent_path() / ".replay" : pairsim::fs::path(scratch);
      const auto rep = pairsim::replay_manifest(mpath, dir);
      json line = {{"manifest", manifest}, {"identical", rep.identical}, {"mismatches", rep.mismatches}};
      std::cout << line.dump() << '\n';
      return rep.identical ? 0 : 2;
    }
    for (const auto& [name, cmd] : phase_cmds) {
      if (!*cmd) continue;
      json extra = json::object();
      if (words) extra["harvest"]["words"] = *words;
      if (limit) extra["harvest"]["limit"] = *limit;
      if (!patterns.empty()) extra["mine"]["patterns"] = patterns;
      if (top) extra["mine"]["top_patterns"] = *top;
      if (max_per_pattern) extra["select"]["max_per_pattern"] = *max_per_pattern;
      if (size) extra["select"]["size"] = *size;
      if (audio_dir) extra["audio"]["dir"] = *audio_dir;
      return run_one(name, common, extra);
    }
  } catch (const pairsim::UsageError& e) {
    std::cerr << "pairsim: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "pairsim: run failed: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
