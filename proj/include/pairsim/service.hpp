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

// HTTP API for expert curation and two-alternative listening sessions.
//
//   GET  /api/pairs?curator=           pending curation queue
//   GET  /api/audio/{pair_id}/{word}?condition=mild@10
//   POST /api/judgments                CurationJudgment
//   POST /api/test/sessions            {session?, condition?} -> new session
//   GET  /api/test/next?session=       next unanswered trial or {complete}
//   POST /api/test/response            TwoAfcResponse
//   GET  /api/results?session=         session CSV
//
// State lives in the run directory as append-only JSON-lines logs
// (judgments.jsonl, sessions.jsonl); the service holds the run lock.

#ifndef PAIRSIM_SERVICE_HPP_
#define PAIRSIM_SERVICE_HPP_

#include <httplib.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "pairsim/run.hpp"

namespace pairsim {

// Clean audio degraded under a condition label such as "mild@10". The noise
// seed depends only on (run seed, word, condition), so every rendering of
// the same word and condition is identical.
inline std::uint64_t render_seed(std::uint64_t run_seed, const std::string& word, const std::string& condition) {
  return trial_seed(run_seed, word, "audio/" + condition, 0);
}

inline std::string render_condition_wav(const AudioBuffer& clean, std::uint64_t run_seed, const std::string& word,
                                        const std::string& condition) {
  DegradationSpec spec = parse_condition(condition);
  spec.noise_seed = render_seed(run_seed, word, condition);
  return encode_wav(degrade(clean, spec));
}

struct ApiReply {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";

  static ApiReply json_body(const json& j, int status = 200) { return {status, j.dump(), "application/json"}; }
  static ApiReply error(int status, const std::string& message) {
    return {status, json{{"error", message}}.dump(), "application/json"};
  }
};

struct TwoAfcTrial {
  std::string pair_id;
  std::string stimulus;
  std::string target;
  std::string played;                  // the word actually presented
  std::array<std::string, 2> choices;  // display order
};

struct TwoAfcSession {
  std::string id;
  std::string condition;
  std::vector<TwoAfcTrial> trials;
  std::map<std::size_t, json> responses;  // by trial index
};

class CurationService {
 public:
  CurationService(RunConfig cfg, fs::path run_dir)
      : cfg_(std::move(cfg)), run_dir_(std::move(run_dir)), lock_(run_dir_), ws_(cfg_) {
    load_pairs();
    load_test_items();
    for (const auto& [key, j] : phases::latest_judgments(run_dir_ / "judgments.jsonl")) judgments_[key] = j;
    replay_sessions();
    curation_condition_ = cfg_.get<std::string>("serve", "curation_condition");
    test_condition_ = cfg_.get<std::string>("serve", "test_condition");
  }

  // Handlers, callable without a socket.

  ApiReply pairs(const std::string& curator) {
    std::lock_guard lock(mu_);
    json list = json::array();
    for (const auto& p : pairs_) {
      if (judged(p.id(), curator)) continue;
      list.push_back({{"id", p.id()},
                      {"stimulus", p.stimulus},
                      {"confusion", p.confusion},
                      {"pattern", to_string(p.pattern)}});
    }
    return ApiReply::json_body({{"pairs", list},
                                {"pending", list.size()},
                                {"total", pairs_.size()},
                                {"default_condition", curation_condition_},
                                {"conditions", condition_options()}});
  }

  ApiReply audio(const std::string& pair_id, const std::string& word, const std::string& condition) {
    const MinimalPair* p = find_pair(pair_id);
    if (!p && !test_pair_ids_.contains(pair_id)) return ApiReply::error(404, "unknown pair " + pair_id);
    const auto words = pair_words(pair_id);
    if (word != words.first && word != words.second) return ApiReply::error(404, "word not in pair " + pair_id);
    const std::string label = condition.empty() ? "normal@inf" : condition;
    try {
      parse_condition(label);
    } catch (const std::exception& e) {
      return ApiReply::error(400, e.what());
    }
    try {
      return {200, rendered(word, label), "audio/wav"};
    } catch (const std::exception& e) {
      return ApiReply::error(500, e.what());
    }
  }

  ApiReply post_judgment(const std::string& body) {
    json j = json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return ApiReply::error(400, "body must be a JSON object");
    if (!j.contains("pair_id") || !j["pair_id"].is_string()) return ApiReply::error(400, "pair_id required");
    if (!j.contains("verdict") || !j["verdict"].is_string()) return ApiReply::error(400, "verdict required");
    const auto verdict = j["verdict"].get<std::string>();
    if (verdict != "useful" && verdict != "rejected") return ApiReply::error(400, "verdict must be useful or rejected");
    if (verdict == "rejected") {
      if (!j.contains("reason") || !j["reason"].is_string() || j["reason"].get<std::string>().empty())
        return ApiReply::error(400, "a rejected verdict needs a reason");
    }
    if (j.contains("curator") && !j["curator"].is_string()) return ApiReply::error(400, "curator must be a string");
    const auto id = j["pair_id"].get<std::string>();
    std::lock_guard lock(mu_);
    if (!find_pair(id)) return ApiReply::error(404, "unknown pair " + id);
    json rec = {{"pair_id", id},
                {"verdict", verdict},
                {"reason", j.value("reason", "")},
                {"curator", j.value("curator", "")},
                {"listened_condition", j.value("listened_condition", curation_condition_)},
                {"timestamp", j.value("timestamp", utc_now())}};
    append_line(run_dir_ / "judgments.jsonl", rec);
    judgments_[{id, rec["curator"].get<std::string>()}] = rec;
    return ApiReply::json_body({{"ok", true}, {"pair_id", id}});
  }

  ApiReply create_session(const std::string& body) {
    json j = body.empty() ? json::object() : json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return ApiReply::error(400, "body must be a JSON object");
    std::lock_guard lock(mu_);
    std::string id = j.value("session", "");
    if (id.empty()) id = "s" + std::to_string(sessions_.size() + 1);
    if (sessions_.contains(id)) return ApiReply::error(409, "session " + id + " exists");
    const std::string condition = j.value("condition", test_condition_);
    try {
      parse_condition(condition);
    } catch (const std::exception& e) {
      return ApiReply::error(400, e.what());
    }
    if (test_items_.empty()) return ApiReply::error(409, "no final set or validated pairs to test");
    json ev = {{"event", "create"}, {"session", id}, {"condition", condition}};
    append_line(run_dir_ / "sessions.jsonl", ev);
    apply_event(ev);
    return ApiReply::json_body({{"session", id}, {"n_trials", sessions_[id].trials.size()}, {"condition", condition}},
                               201);
  }

  ApiReply next(const std::string& session) {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(session);
    if (it == sessions_.end()) return ApiReply::error(404, "unknown session " + session);
    const auto& s = it->second;
    for (std::size_t i = 0; i < s.trials.size(); ++i) {
      if (s.responses.contains(i)) continue;
      const auto& t = s.trials[i];
      return ApiReply::json_body({{"session", s.id},
                                  {"complete", false},
                                  {"trial_index", i},
                                  {"n_trials", s.trials.size()},
                                  {"pair_id", t.pair_id},
                                  {"condition", s.condition},
                                  {"audio_url", "/api/audio/" + t.pair_id + "/" + t.played + "?condition=" + s.condition},
                                  {"choices", {t.choices[0], t.choices[1]}}});
    }
    return ApiReply::json_body({{"session", s.id}, {"complete", true}, {"n_trials", s.trials.size()}});
  }

  ApiReply post_response(const std::string& body) {
    json j = json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return ApiReply::error(400, "body must be a JSON object");
    if (!j.contains("session") || !j["session"].is_string()) return ApiReply::error(400, "session required");
    if (!j.contains("trial_index") || !j["trial_index"].is_number_unsigned())
      return ApiReply::error(400, "trial_index must be a non-negative integer");
    if (!j.contains("choice") || !j["choice"].is_string()) return ApiReply::error(400, "choice required");
    if (!j.contains("latency_ms") || !j["latency_ms"].is_number() || j["latency_ms"].get<double>() < 0)
      return ApiReply::error(400, "latency_ms must be a number >= 0");
    std::lock_guard lock(mu_);
    auto it = sessions_.find(j["session"].get<std::string>());
    if (it == sessions_.end()) return ApiReply::error(404, "unknown session");
    auto& s = it->second;
    const auto idx = j["trial_index"].get<std::size_t>();
    if (idx >= s.trials.size()) return ApiReply::error(400, "trial_index out of range");
    if (s.responses.contains(idx)) return ApiReply::error(409, "trial already answered");
    const auto& t = s.trials[idx];
    std::string choice = j["choice"].get<std::string>();
    if (choice == t.stimulus) choice = "stimulus";
    if (choice == t.target) choice = "target";
    if (choice != "stimulus" && choice != "target") return ApiReply::error(400, "choice is not one of the options");
    json ev = {{"event", "response"},
               {"session", s.id},
               {"trial_index", idx},
               {"pair_id", t.pair_id},
               {"played_word", t.played == t.stimulus ? "stimulus" : "target"},
               {"choice", choice},
               {"latency_ms", j["latency_ms"]},
               {"condition", s.condition}};
    append_line(run_dir_ / "sessions.jsonl", ev);
    apply_event(ev);
    return ApiReply::json_body({{"ok", true}});
  }

  ApiReply results(const std::string& session) {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(session);
    if (it == sessions_.end()) return ApiReply::error(404, "unknown session " + session);
    std::ostringstream csv;
    csv << "session,trial_index,pair_id,stimulus,target,played_word,choice,correct,latency_ms,condition\n";
    for (const auto& [i, r] : it->second.responses) {
      const auto& t = it->second.trials[i];
      csv << util::csv_field(it->first) << ',' << i << ',' << t.pair_id << ',' << t.stimulus << ',' << t.target << ','
          << r["played_word"].get<std::string>() << ',' << r["choice"].get<std::string>() << ','
          << (r["played_word"] == r["choice"] ? "true" : "false") << ','
          << util::format_double(r["latency_ms"].get<double>()) << ',' << r["condition"].get<std::string>() << '\n';
    }
    return {200, csv.str(), "text/csv"};
  }

  // Binds to `port` (0 = any free port) and serves on a background thread.
  int start(const std::string& host, int port) {
    install_routes();
    port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (port_ < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  // Blocks serving requests until stop() is called from elsewhere.
  void serve_forever(const std::string& host, int port) {
    install_routes();
    if (!server_.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  ~CurationService() { stop(); }

 private:
  static void append_line(const fs::path& p, const json& j) {
    std::ofstream out(p, std::ios::app | std::ios::binary);
    if (!out) throw Error("cannot append to " + p.string());
    out << j.dump() << '\n';
    out.flush();
  }

  json condition_options() const {
    return json::array({"normal@inf", "mild@10", "moderate@0", "profound@0", curation_condition_, test_condition_});
  }

  bool judged(const std::string& id, const std::string& curator) const {
    for (const auto& [key, j] : judgments_)
      if (key.first == id && (curator.empty() || key.second == curator)) return true;
    return false;
  }

  const MinimalPair* find_pair(const std::string& id) const {
    for (const auto& p : pairs_)
      if (p.id() == id) return &p;
    return nullptr;
  }

  std::pair<std::string, std::string> pair_words(const std::string& id) const {
    const auto tilde = id.find('~');
    if (tilde == std::string::npos) return {};
    return {id.substr(0, tilde), id.substr(tilde + 1)};
  }

  std::string rendered(const std::string& word, const std::string& condition) {
    {
      std::lock_guard lock(audio_mu_);
      if (auto it = audio_cache_.find({word, condition}); it != audio_cache_.end()) return it->second;
    }
    std::lock_guard render_lock(render_mu_);
    const AudioBuffer clean = ws_.clean_audio(word, run_dir_);
    std::string wav = render_condition_wav(clean, cfg_.seed, word, condition);
    write_file(run_dir_ / "audio" / condition / (word + ".wav"), wav);
    std::lock_guard lock(audio_mu_);
    audio_cache_[{word, condition}] = wav;
    return wav;
  }

  void load_pairs() {
    for (const char* name : {"validated.jsonl", "pairs.jsonl"}) {
      if (fs::exists(run_dir_ / name)) {
        pairs_ = read_jsonl_file((run_dir_ / name).string(), pair_from);
        return;
      }
    }
    throw Error("serve: " + run_dir_.string() + " has neither validated.jsonl nor pairs.jsonl");
  }

  // Test items: the final set when present, else the forward reading of each
  // curated pair.
  void load_test_items() {
    if (fs::exists(run_dir_ / "final_set.csv")) {
      std::ifstream in(run_dir_ / "final_set.csv");
      for (auto& r : read_final_set_csv(in)) test_items_.push_back({r.item.stimulus, r.item.target});
    } else {
      for (const auto& p : pairs_) test_items_.push_back({p.stimulus, p.confusion});
    }
    for (const auto& [s, t] : test_items_) test_pair_ids_.insert(s + "~" + t);
  }

  void replay_sessions() {
    const auto log = run_dir_ / "sessions.jsonl";
    if (!fs::exists(log)) return;
    for (const auto& ev : read_jsonl_file(log.string(), [](const json& x) { return x; })) apply_event(ev);
  }

  // Trial order and choice order are a pure function of (seed, session).
  void apply_event(const json& ev) {
    const auto id = ev.at("session").get<std::string>();
    if (ev.at("event") == "create") {
      TwoAfcSession s;
      s.id = id;
      s.condition = ev.at("condition").get<std::string>();
      Rng rng(trial_seed(cfg_.seed, id, "2afc/order", 0));
      std::vector<std::size_t> order(test_items_.size());
      std::iota(order.begin(), order.end(), 0);
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
      for (auto k : order) {
        const auto& [stim, target] = test_items_[k];
        TwoAfcTrial t{stim + "~" + target, stim, target, stim, {stim, target}};
        if (rng.below(2)) std::swap(t.choices[0], t.choices[1]);
        s.trials.push_back(std::move(t));
      }
      sessions_[id] = std::move(s);
    } else if (ev.at("event") == "response") {
      sessions_.at(id).responses[ev.at("trial_index").get<std::size_t>()] = ev;
    }
  }

  void install_routes() {
    if (routes_installed_) return;
    routes_installed_ = true;
    auto send = [](httplib::Response& res, const ApiReply& r) {
      res.status = r.status;
      res.set_content(r.body, r.content_type);
    };
    server_.Get("/api/pairs", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, pairs(req.get_param_value("curator")));
    });
    server_.Get(R"(/api/audio/([^/]+)/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, audio(req.matches[1], req.matches[2], req.get_param_value("condition")));
    });
    server_.Post("/api/judgments", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, post_judgment(req.body));
    });
    server_.Post("/api/test/sessions", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, create_session(req.body));
    });
    server_.Get("/api/test/next", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, next(req.get_param_value("session")));
    });
    server_.Post("/api/test/response", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, post_response(req.body));
    });
    server_.Get("/api/results", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, results(req.get_param_value("session")));
    });
  }

  RunConfig cfg_;
  fs::path run_dir_;
  RunLock lock_;
  Workspace ws_;
  std::vector<MinimalPair> pairs_;
  std::vector<std::pair<std::string, std::string>> test_items_;
  std::set<std::string> test_pair_ids_;
  std::map<std::pair<std::string, std::string>, json> judgments_;
  std::map<std::string, TwoAfcSession> sessions_;
  std::string curation_condition_, test_condition_;
  std::mutex mu_, audio_mu_, render_mu_;
  std::map<std::pair<std::string, std::string>, std::string> audio_cache_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
  bool routes_installed_ = false;
};

}  // namespace pairsim

#endif  // PAIRSIM_SERVICE_HPP_
