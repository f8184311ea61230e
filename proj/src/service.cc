// Copyright 2026 The etal Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "etal/service.h"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <httplib.h>
#include <json.hpp>
#include <regex>
#include <set>
#include <thread>

#include "etal/embeddings.h"
#include "etal/errors.h"
#include "etal/project.h"

namespace etal {

namespace fs = std::filesystem;
using nlohmann::json;

std::int64_t system_clock_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

ServiceConfig load_service_config(const std::string& path) {
  ServiceConfig c;
  if (!path.empty()) {
    json j;
    try {
      j = json::parse(read_file(path));
      c.data_root = j.value("data_root", c.data_root);
      c.host = j.value("host", c.host);
      c.port = j.value("port", c.port);
    } catch (const json::exception& e) {
      throw Error("config " + path + ": " + e.what());
    }
  }
  if (const char* root = std::getenv("ETAL_DATA_ROOT"); root && *root) c.data_root = root;
  if (const char* port = std::getenv("ETAL_PORT"); port && *port) {
    char* end = nullptr;
    long p = std::strtol(port, &end, 10);
    if (*end != '\0' || p < 0 || p > 65535) throw Error(std::string("ETAL_PORT is not a port number: ") + port);
    c.port = static_cast<int>(p);
  }
  return c;
}

namespace {

// Thrown inside handlers and turned into an error response.
struct HttpError {
  int status;
  json body;
};

[[noreturn]] void fail(int status, const std::string& message) { throw HttpError{status, {{"error", message}}}; }

Response reply(int status, json body) {
  body["api_version"] = kApiVersion;
  return {status, body.dump()};
}

bool valid_name(const std::string& s) {
  static const std::regex re("[A-Za-z0-9_-]+");
  return std::regex_match(s, re);
}

// "name.N" or "name.N.K"; parts beyond the name must be numbers.
std::vector<std::string> split_id(const std::string& id, std::size_t parts) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  for (;;) {
    std::size_t dot = id.find('.', pos);
    out.push_back(id.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos));
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  if (out.size() != parts || !valid_name(out[0])) fail(404, "malformed id '" + id + "'");
  for (std::size_t i = 1; i < out.size(); ++i)
    if (out[i].empty() || out[i].size() > 9 || out[i].find_first_not_of("0123456789") != std::string::npos)
      fail(404, "malformed id '" + id + "'");
  return out;
}

json parse_body(const Request& r) {
  if (r.body.empty()) return json::object();
  try {
    json j = json::parse(r.body);
    if (!j.is_object()) fail(400, "request body must be a JSON object");
    return j;
  } catch (const json::exception& e) {
    fail(400, std::string("request body is not valid JSON: ") + e.what());
  }
}

template <class T>
T field(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  try {
    return j[key].get<T>();
  } catch (const json::exception&) {
    fail(400, std::string("field '") + key + "' has the wrong type");
  }
}

std::vector<LabeledSequence> parse_corpus(const json& body, const char* key, const std::string& format,
                                          const LabelScheme& scheme) {
  std::string text = field<std::string>(body, key, "");
  try {
    return format == "jsonl" ? parse_jsonl(text, scheme) : parse_conll(text, scheme);
  } catch (const ParseError& e) {
    json err = {{"error", std::string(key) + ": " + e.what()}, {"field", key}};
    if (e.line()) err["line"] = e.line();
    throw HttpError{400, err};
  } catch (const Error& e) {
    throw HttpError{400, {{"error", std::string(key) + ": " + e.what()}, {"field", key}}};
  }
}

json counts_json(const SpanCounts& c) {
  return {{"precision", c.precision()},
          {"recall", c.recall()},
          {"f1", c.f1()},
          {"gold", c.gold},
          {"predicted", c.predicted},
          {"correct", c.correct}};
}

std::string round_id(const std::string& project, int round) { return project + "." + std::to_string(round); }
std::string item_id(const std::string& project, int round, int item) {
  return round_id(project, round) + "." + std::to_string(item);
}

json entities_json(const std::vector<Entity>& es, const LabelScheme& scheme) {
  json out = json::array();
  for (const Entity& e : es) out.push_back({{"start", e.start}, {"end", e.end}, {"type", scheme.entity_types()[e.type]}});
  return out;
}

}  // namespace

struct AnnotationService::Project {
  std::mutex mu;
  std::string dir;
  ProjectState state;
  std::shared_ptr<const EmbeddingTable> embeddings;
  CrfModel model;
  TrainingSetup setup;
  SequencePool pool;
  AcquiredData acquired;
  std::set<std::string> event_ids;
  std::thread worker;

  // Builds the derived state (pool features, constraints) from `state`.
  void attach(CrfModel current) {
    CrfModel blank(state.scheme, state.config.features, embeddings);
    pool = SequencePool(state.pool, blank);
    acquired = replay_events(state, pool);
    for (const auto& e : state.events) event_ids.insert(e.event_id);
    CrfModel initial = load_snapshot(dir, snapshot_name(0));
    initial.set_embeddings(embeddings);
    setup = TrainingSetup{std::move(initial), blank, make_examples(blank, state.transferred)};
    model = std::move(current);
    model.set_embeddings(embeddings);
  }

  ProjectRound& round(int index) {
    if (index < 1 || index > static_cast<int>(state.rounds.size()))
      fail(404, "unknown round " + round_id(state.name, index));
    return state.rounds[index - 1];
  }

  void save_meta() { save_project_meta(state, dir); }
};

AnnotationService::AnnotationService(ServiceConfig config, Clock clock)
    : config_(std::move(config)), clock_(std::move(clock)) {}

AnnotationService::~AnnotationService() { wait_idle(); }

void AnnotationService::wait_idle() {
  std::vector<Project*> all;
  {
    std::lock_guard<std::mutex> lock(projects_mu_);
    for (auto& [name, p] : projects_) all.push_back(p.get());
  }
  for (Project* p : all)
    if (p->worker.joinable()) p->worker.join();
}

AnnotationService::Project* AnnotationService::find(const std::string& name) {
  std::lock_guard<std::mutex> lock(projects_mu_);
  auto it = projects_.find(name);
  if (it != projects_.end()) return it->second.get();
  fs::path dir = fs::path(config_.data_root) / name;
  if (!valid_name(name) || !fs::exists(dir / "project.json")) return nullptr;
  auto p = std::make_unique<Project>();
  p->dir = dir.string();
  try {
    p->state = load_project(p->dir);
    if (fs::exists(dir / "embeddings.txt"))
      p->embeddings = std::make_shared<const EmbeddingTable>(parse_embeddings(read_file((dir / "embeddings.txt").string())));
    p->attach(load_snapshot(p->dir, p->state.current_model));
  } catch (const Error& e) {
    fail(500, "project " + name + " cannot be loaded: " + e.what());
  }
  // A crash during retraining leaves the round finalizing; it is open again.
  if (ProjectRound* r = p->state.open_round(); r && r->status == RoundStatus::kFinalizing)
    r->status = RoundStatus::kOpen;
  return projects_.emplace(name, std::move(p)).first->second.get();
}

AnnotationService::Project& AnnotationService::require(const std::string& name) {
  Project* p = find(name);
  if (!p) fail(404, "unknown project '" + name + "'");
  return *p;
}

Response AnnotationService::handle(const Request& r) {
  std::vector<std::string> seg;
  for (std::size_t pos = 1; pos <= r.path.size();) {
    std::size_t slash = r.path.find('/', pos);
    if (slash == std::string::npos) slash = r.path.size();
    seg.push_back(r.path.substr(pos, slash - pos));
    pos = slash + 1;
  }
  if (!seg.empty() && seg.back().empty()) seg.pop_back();
  bool get = r.method == "GET", post = r.method == "POST";

  try {
    if (seg.size() == 1 && seg[0] == "projects" && post) return create_project(r);
    if (seg.size() >= 2 && seg[0] == "projects") {
      if (seg.size() == 2 && get) return get_project(seg[1]);
      if (seg.size() == 3 && seg[2] == "metrics" && get) return metrics(seg[1]);
      if (seg.size() == 3 && seg[2] == "rounds" && post) return open_round(seg[1], r);
    }
    if (seg.size() >= 2 && seg[0] == "rounds") {
      if (seg.size() == 2 && get) return get_round(seg[1]);
      if (seg.size() == 3 && seg[2] == "sessions" && post) return open_session(seg[1], r);
      if (seg.size() == 3 && seg[2] == "next" && get) return next_item(seg[1], r);
      if (seg.size() == 3 && seg[2] == "finalize" && post) return finalize(seg[1]);
    }
    if (seg.size() >= 2 && seg[0] == "items") {
      if (seg.size() == 2 && get) return get_item(seg[1]);
      if (seg.size() == 3 && seg[2] == "annotation" && post) return annotate(seg[1], r, false);
      if (seg.size() == 3 && seg[2] == "skip" && post) return annotate(seg[1], r, true);
    }
    return reply(404, {{"error", "no route for " + r.method + " " + r.path}});
  } catch (const HttpError& e) {
    return reply(e.status, e.body);
  } catch (const std::exception& e) {
    return reply(500, {{"error", e.what()}});
  }
}

Response AnnotationService::create_project(const Request& r) {
  json body = parse_body(r);
  std::string name = field<std::string>(body, "name", "");
  if (!valid_name(name)) fail(400, "project name must match [A-Za-z0-9_-]+");

  LabelScheme scheme = LabelScheme::conll();
  if (body.contains("entity_types")) {
    try {
      scheme = LabelScheme(field<std::vector<std::string>>(body, "entity_types", {}));
    } catch (const Error& e) {
      fail(400, std::string("entity_types: ") + e.what());
    }
  }
  std::string format = field<std::string>(body, "format", "conll");
  if (format != "conll" && format != "jsonl") fail(400, "format must be conll or jsonl");

  auto pool = parse_corpus(body, "pool", format, scheme);
  if (pool.empty()) fail(400, "pool: the corpus is empty");
  auto transferred = parse_corpus(body, "transferred", format, scheme);
  auto test = parse_corpus(body, "test", format, scheme);
  for (const auto& s : test)
    if (!s.labeled()) fail(400, "test: sequence " + s.id + " has no labels");
  for (const auto& s : transferred)
    if (!s.labeled()) fail(400, "transferred: sequence " + s.id + " has no labels");

  std::set<std::string> ids;
  bool any_labels = false, all_labels = true;
  for (const auto& s : pool) {
    if (!ids.insert(s.id).second) fail(400, "pool: duplicate sequence id " + s.id);
    any_labels = any_labels || s.labeled();
    all_labels = all_labels && s.labeled();
  }
  if (any_labels && !all_labels) fail(400, "pool: gold labels must be given for every sequence or none");

  std::shared_ptr<const EmbeddingTable> embeddings;
  std::string embedding_text = field<std::string>(body, "embeddings", "");
  if (!embedding_text.empty()) {
    try {
      embeddings = std::make_shared<const EmbeddingTable>(parse_embeddings(embedding_text));
    } catch (const ParseError& e) {
      throw HttpError{400, {{"error", std::string("embeddings: ") + e.what()}, {"field", "embeddings"}, {"line", e.line()}}};
    }
  }

  ProjectState s;
  s.name = name;
  s.scheme = scheme;
  ProjectConfig& c = s.config;
  c.scheme.scheme = transferred.empty() ? Scheme::kCorpusAug : Scheme::kFineTune;
  json cfg = body.value("config", json::object());
  try {
    if (cfg.contains("scheme")) c.scheme.scheme = parse_scheme(cfg["scheme"].get<std::string>());
    c.scheme.learning_rate = cfg.value("learning_rate", c.scheme.learning_rate);
    c.scheme.first_round_learning_rate = cfg.value("first_round_learning_rate", c.scheme.first_round_learning_rate);
    c.scheme.epochs = cfg.value("epochs", c.scheme.epochs);
    c.selection.max_span_length = cfg.value("max_span_length", c.selection.max_span_length);
    c.selection.entropy_threshold = cfg.value("entropy_threshold", c.selection.entropy_threshold);
    c.features.hash_bits = cfg.value("hash_bits", c.features.hash_bits);
    c.budget = cfg.value("budget", c.budget);
    c.seed = cfg.value("seed", c.seed);
    c.session_minutes = cfg.value("session_minutes", c.session_minutes);
  } catch (const json::exception& e) {
    fail(400, std::string("config: ") + e.what());
  } catch (const Error& e) {
    fail(400, std::string("config: ") + e.what());
  }
  if (c.scheme.scheme != Scheme::kCorpusAug && transferred.empty())
    fail(400, scheme_name(c.scheme.scheme) + " needs transferred data");
  if (c.budget < 1 || c.scheme.epochs < 1 || c.session_minutes < 1 || c.selection.max_span_length < 1 ||
      c.features.hash_bits < 4 || c.features.hash_bits > 26)
    fail(400, "config: budget, epochs, session_minutes and max_span_length must be positive, hash_bits in 4..26");

  if (all_labels) {
    s.gold = pool;
    for (auto& seq : pool) seq.labels.clear();
  }
  s.pool = std::move(pool);
  s.transferred = std::move(transferred);
  s.test = std::move(test);
  s.current_model = snapshot_name(0);

  std::lock_guard<std::mutex> lock(projects_mu_);
  fs::path dir = fs::path(config_.data_root) / name;
  if (projects_.count(name) || fs::exists(dir / "project.json")) fail(409, "project '" + name + "' already exists");

  auto p = std::make_unique<Project>();
  p->dir = dir.string();
  p->state = std::move(s);
  p->embeddings = embeddings;
  CrfModel blank(p->state.scheme, c.features, embeddings);
  TrainingSetup setup;
  try {
    setup = prepare_training(blank, p->state.transferred, c.scheme, mix_seed(c.seed));
  } catch (const Error& e) {
    fail(400, std::string("training on the transferred data failed: ") + e.what());
  }
  fs::create_directories(dir);
  if (embeddings) write_file((dir / "embeddings.txt").string(), embedding_text);
  save_snapshot(p->dir, snapshot_name(0), setup.initial);
  save_project(p->state, p->dir);
  p->attach(setup.initial);

  json out = {{"id", name},
              {"pool", p->state.pool.size()},
              {"gold", !p->state.gold.empty()},
              {"transferred", p->state.transferred.size()},
              {"test", p->state.test.size()},
              {"scheme", scheme_name(c.scheme.scheme)}};
  projects_.emplace(name, std::move(p));
  return reply(201, out);
}

Response AnnotationService::get_project(const std::string& name) {
  Project& p = require(name);
  std::lock_guard<std::mutex> lock(p.mu);
  const ProjectState& s = p.state;
  json rounds = json::array();
  for (const auto& r : s.rounds)
    rounds.push_back({{"id", round_id(s.name, r.index)}, {"status", round_status_name(r.status)}});
  return reply(200, {{"id", s.name},
                     {"entity_types", s.scheme.entity_types()},
                     {"pool", s.pool.size()},
                     {"gold", !s.gold.empty()},
                     {"transferred", s.transferred.size()},
                     {"test", s.test.size()},
                     {"scheme", scheme_name(s.config.scheme.scheme)},
                     {"budget", s.config.budget},
                     {"current_model", s.current_model},
                     {"rounds", rounds}});
}

Response AnnotationService::metrics(const std::string& name) {
  Project& p = require(name);
  std::lock_guard<std::mutex> lock(p.mu);
  json records = json::array();
  for (const auto& r : p.state.rounds) {
    if (r.status != RoundStatus::kClosed || !r.metrics) continue;
    const RoundMetrics& m = *r.metrics;
    json rec = {{"round", r.index},
                {"strategy", strategy_name(r.batch.strategy)},
                {"tokens_round", m.tokens_round},
                {"tokens_cumulative", m.tokens_cumulative},
                {"answers", m.answers},
                {"entities", m.entities}};
    if (m.annotator) rec["annotator"] = counts_json(*m.annotator);
    if (m.test) rec["test"] = counts_json(*m.test);
    records.push_back(rec);
  }
  return reply(200, {{"project", name}, {"records", records}});
}

Response AnnotationService::open_round(const std::string& name, const Request& r) {
  Project& p = require(name);
  json body = parse_body(r);
  std::lock_guard<std::mutex> lock(p.mu);
  ProjectState& s = p.state;
  if (ProjectRound* open = s.open_round())
    fail(409, "round " + round_id(name, open->index) + " is still " + round_status_name(open->status));

  Strategy strategy;
  try {
    strategy = parse_strategy(field<std::string>(body, "strategy", "ETAL"));
  } catch (const Error& e) {
    fail(400, e.what());
  }
  int budget = field<int>(body, "budget", s.config.budget);
  if (budget < 1) fail(400, "budget must be at least 1 token");

  int index = static_cast<int>(s.rounds.size()) + 1;
  std::uint64_t seed = mix_seed(s.config.seed ^ mix_seed(static_cast<std::uint64_t>(index)));
  SelectionBatch batch = select_batch(strategy, p.pool, p.model, budget, s.config.selection, p.acquired.coverage, seed);
  if (batch.items.empty()) {
    json warnings = batch.warnings;
    if (warnings.empty()) warnings.push_back("nothing left to select in the pool");
    return reply(200, {{"round", nullptr},
                       {"strategy", strategy_name(strategy)},
                       {"items", json::array()},
                       {"token_cost", 0},
                       {"warning", true},
                       {"warnings", warnings}});
  }

  ProjectRound round;
  round.index = index;
  round.batch = std::move(batch);
  s.rounds.push_back(std::move(round));
  p.save_meta();
  const ProjectRound& saved = s.rounds.back();
  json items = json::array();
  for (std::size_t i = 0; i < saved.batch.items.size(); ++i) {
    const auto& it = saved.batch.items[i];
    items.push_back({{"id", item_id(name, index, static_cast<int>(i))},
                     {"seq_id", it.seq_id},
                     {"start", it.start},
                     {"end", it.end},
                     {"surface", it.surface},
                     {"score", it.score}});
  }
  return reply(201, {{"round", round_id(name, index)},
                     {"strategy", strategy_name(strategy)},
                     {"token_cost", saved.batch.token_cost},
                     {"items", items},
                     {"warning", !saved.batch.warnings.empty()},
                     {"warnings", saved.batch.warnings}});
}

Response AnnotationService::get_round(const std::string& id) {
  auto parts = split_id(id, 2);
  Project& p = require(parts[0]);
  std::lock_guard<std::mutex> lock(p.mu);
  const ProjectRound& r = p.round(std::stoi(parts[1]));
  json items = json::array();
  for (std::size_t i = 0; i < r.batch.items.size(); ++i) {
    const auto& it = r.batch.items[i];
    items.push_back({{"id", item_id(parts[0], r.index, static_cast<int>(i))},
                     {"seq_id", it.seq_id},
                     {"start", it.start},
                     {"end", it.end},
                     {"surface", it.surface}});
  }
  json sessions = json::array();
  for (const auto& s : r.sessions)
    sessions.push_back({{"id", s.id},
                        {"annotator", s.annotator},
                        {"mode", strategy_name(s.mode)},
                        {"served", s.served.size()},
                        {"completed", s.completed.size()},
                        {"state", s.expired(clock_()) ? "expired" : "active"}});
  json out = {{"round", id},
              {"index", r.index},
              {"status", round_status_name(r.status)},
              {"strategy", strategy_name(r.batch.strategy)},
              {"token_cost", r.batch.token_cost},
              {"items", items},
              {"sessions", sessions},
              {"error", r.error}};
  if (r.metrics) {
    out["tokens_annotated"] = r.metrics->tokens_round;
    out["tokens_cumulative"] = r.metrics->tokens_cumulative;
    out["entities"] = r.metrics->entities;
    if (r.metrics->annotator) out["annotator"] = counts_json(*r.metrics->annotator);
    if (r.metrics->test) out["test"] = counts_json(*r.metrics->test);
  }
  return reply(200, out);
}

Response AnnotationService::open_session(const std::string& id, const Request& r) {
  auto parts = split_id(id, 2);
  Project& p = require(parts[0]);
  json body = parse_body(r);
  std::lock_guard<std::mutex> lock(p.mu);
  ProjectRound& round = p.round(std::stoi(parts[1]));
  if (round.status != RoundStatus::kOpen) fail(409, "round " + id + " is " + round_status_name(round.status));
  std::string annotator = field<std::string>(body, "annotator", "");
  if (annotator.empty()) fail(400, "annotator is required");

  Session s;
  s.id = id + ".s" + std::to_string(round.sessions.size() + 1);
  s.annotator = annotator;
  s.mode = round.batch.strategy == Strategy::kSal ? Strategy::kSal : Strategy::kEtal;
  s.start_ms = clock_();
  s.duration_s = field<int>(body, "duration_s", p.state.config.session_minutes * 60);
  if (s.duration_s < 1) fail(400, "duration_s must be positive");
  round.sessions.push_back(s);
  p.save_meta();
  return reply(201, {{"session", s.id},
                     {"annotator", s.annotator},
                     {"mode", strategy_name(s.mode)},
                     {"start_ms", s.start_ms},
                     {"expires_ms", s.start_ms + std::int64_t{s.duration_s} * 1000}});
}

Response AnnotationService::next_item(const std::string& id, const Request& r) {
  auto parts = split_id(id, 2);
  Project& p = require(parts[0]);
  std::lock_guard<std::mutex> lock(p.mu);
  ProjectRound& round = p.round(std::stoi(parts[1]));
  auto q = r.query.find("session");
  if (q == r.query.end()) fail(400, "session query parameter is required");
  Session* session = nullptr;
  for (auto& s : round.sessions)
    if (s.id == q->second) session = &s;
  if (!session) fail(404, "unknown session '" + q->second + "' for round " + id);
  std::int64_t now = clock_();
  if (session->expired(now)) fail(410, "session " + session->id + " expired");
  if (round.status != RoundStatus::kOpen) fail(409, "round " + id + " is " + round_status_name(round.status));

  std::set<int> served;
  for (const auto& s : round.sessions) served.insert(s.served.begin(), s.served.end());
  int next = -1;
  for (int i = 0; i < static_cast<int>(round.batch.items.size()); ++i)
    if (!served.count(i)) {
      next = i;
      break;
    }
  if (next < 0) return {204, ""};

  session->served.push_back(next);
  p.save_meta();
  const SelectionItem& item = round.batch.items[next];
  const LabeledSequence& seq = p.state.pool[item.seq_index];
  bool whole = session->mode == Strategy::kSal;
  return reply(200, {{"item", item_id(parts[0], round.index, next)},
                     {"seq_id", seq.id},
                     {"tokens", seq.tokens},
                     {"start", item.start},
                     {"end", item.end},
                     {"mode", strategy_name(session->mode)},
                     {"whole_sequence", whole},
                     {"entity_types", p.state.scheme.entity_types()},
                     {"remaining_ms", session->start_ms + std::int64_t{session->duration_s} * 1000 - now}});
}

Response AnnotationService::annotate(const std::string& id, const Request& r, bool skip) {
  auto parts = split_id(id, 3);
  Project& p = require(parts[0]);
  json body = parse_body(r);
  std::lock_guard<std::mutex> lock(p.mu);
  ProjectState& st = p.state;
  int round_index = std::stoi(parts[1]), item_index = std::stoi(parts[2]);
  ProjectRound& round = p.round(round_index);
  if (item_index >= static_cast<int>(round.batch.items.size())) fail(404, "unknown item " + id);
  const SelectionItem& item = round.batch.items[item_index];
  const LabeledSequence& seq = st.pool[item.seq_index];

  std::string event_id = field<std::string>(body, "event_id", "");
  if (event_id.empty()) fail(400, "event_id is required");
  auto event_json = [&](const AnnotationEvent& e, bool duplicate) {
    return json{{"event_id", e.event_id},
                {"item", id},
                {"skipped", e.skipped},
                {"start", e.start},
                {"end", e.end},
                {"entities", entities_json(e.entities, st.scheme)},
                {"duplicate", duplicate}};
  };
  if (p.event_ids.count(event_id)) {
    for (const auto& e : st.events)
      if (e.event_id == event_id) {
        if (e.round != round_index || e.item != item_index)
          fail(409, "event id " + event_id + " was already used for another item");
        return reply(200, event_json(e, true));
      }
  }

  if (round.status != RoundStatus::kOpen) fail(409, "round " + round_id(parts[0], round_index) + " is " +
                                                         round_status_name(round.status));
  std::string session_id = field<std::string>(body, "session", "");
  Session* session = nullptr;
  for (auto& s : round.sessions)
    if (s.id == session_id) session = &s;
  if (!session) fail(400, "unknown session '" + session_id + "'");
  if (std::find(session->served.begin(), session->served.end(), item_index) == session->served.end())
    fail(409, "item " + id + " was not dispensed to session " + session_id);
  for (const auto& e : st.events)
    if (e.round == round_index && e.item == item_index)
      fail(409, "item " + id + " already has event " + e.event_id);

  AnnotationEvent ev;
  ev.event_id = event_id;
  ev.round = round_index;
  ev.item = item_index;
  ev.session = session_id;
  ev.annotator = session->annotator;
  ev.time_ms = clock_();
  ev.skipped = skip;
  ev.start = item.start;
  ev.end = item.end;
  auto type_of = [&](const json& v) {
    std::string name = v.get<std::string>();
    int t = st.scheme.type_index(name);
    if (t < 0) fail(400, "unknown entity type '" + name + "'");
    return t;
  };
  if (!skip) {
    try {
      if (session->mode == Strategy::kSal) {
        ev.start = 0;
        ev.end = seq.size();
        for (const auto& e : body.value("entities", json::array()))
          ev.entities.push_back({e.at("start").get<int>(), e.at("end").get<int>(), type_of(e.at("type"))});
        std::sort(ev.entities.begin(), ev.entities.end());
      } else {
        ev.start = item.start + field<int>(body, "start_delta", 0);
        ev.end = item.end + field<int>(body, "end_delta", 0);
        if (ev.start < 0 || ev.end > seq.size() || ev.start >= ev.end)
          fail(400, "adjusted span [" + std::to_string(ev.start) + "," + std::to_string(ev.end) +
                        ") is outside sequence " + seq.id + " of length " + std::to_string(seq.size()));
        if (body.contains("type") && !body["type"].is_null()) ev.entities.push_back({ev.start, ev.end, type_of(body["type"])});
      }
    } catch (const json::exception& e) {
      fail(400, std::string("malformed annotation: ") + e.what());
    }
  }

  Answer a = ev.answer();
  ApplyResult applied;
  try {
    applied = apply_annotations(p.acquired, p.pool, round.batch, std::span(&a, 1), st.scheme);
  } catch (const ConflictError& e) {
    fail(409, e.what());
  } catch (const Error& e) {
    fail(400, e.what());
  }
  append_event(p.dir, ev);
  st.events.push_back(ev);
  p.event_ids.insert(ev.event_id);
  session->completed.push_back(item_index);
  p.save_meta();
  json out = event_json(ev, false);
  out["tokens"] = applied.tokens;
  return reply(200, out);
}

Response AnnotationService::get_item(const std::string& id) {
  auto parts = split_id(id, 3);
  Project& p = require(parts[0]);
  std::lock_guard<std::mutex> lock(p.mu);
  int round_index = std::stoi(parts[1]), item_index = std::stoi(parts[2]);
  const ProjectRound& round = p.round(round_index);
  if (item_index >= static_cast<int>(round.batch.items.size())) fail(404, "unknown item " + id);
  const SelectionItem& item = round.batch.items[item_index];
  json events = json::array();
  for (const auto& e : p.state.events)
    if (e.round == round_index && e.item == item_index)
      events.push_back({{"event_id", e.event_id},
                        {"annotator", e.annotator},
                        {"time_ms", e.time_ms},
                        {"skipped", e.skipped},
                        {"start", e.start},
                        {"end", e.end},
                        {"entities", entities_json(e.entities, p.state.scheme)}});
  return reply(200, {{"item", id},
                     {"round", round_id(parts[0], round_index)},
                     {"seq_id", item.seq_id},
                     {"tokens", p.state.pool[item.seq_index].tokens},
                     {"start", item.start},
                     {"end", item.end},
                     {"annotations", events}});
}

Response AnnotationService::finalize(const std::string& id) {
  auto parts = split_id(id, 2);
  Project& p = require(parts[0]);
  std::lock_guard<std::mutex> lock(p.mu);
  int index = std::stoi(parts[1]);
  ProjectRound& round = p.round(index);
  if (round.status != RoundStatus::kOpen) fail(409, "round " + id + " is " + round_status_name(round.status));
  if (p.worker.joinable()) p.worker.join();
  round.status = RoundStatus::kFinalizing;
  round.error.clear();
  p.save_meta();
  p.worker = std::thread([this, &p, index] { retrain_job(p, index); });
  return reply(202, {{"round", id}, {"status", "finalizing"}});
}

void AnnotationService::retrain_job(Project& p, int index) {
  std::vector<TrainingExample> examples;
  SchemeConfig config;
  std::uint64_t seed = 0;
  {
    std::lock_guard<std::mutex> lock(p.mu);
    examples = make_examples(p.pool, p.acquired);
    config = p.state.config.scheme;
    seed = mix_seed(mix_seed(p.state.config.seed ^ mix_seed(static_cast<std::uint64_t>(index))));
  }
  try {
    // Nothing to train on at all: the blank model stays current.
    CrfModel model = examples.empty() && p.setup.transferred.empty() ? p.setup.initial
                                                                      : retrain(p.setup, examples, index, config, seed);
    std::lock_guard<std::mutex> lock(p.mu);
    ProjectState& s = p.state;
    RoundMetrics m;
    for (const auto& e : s.events) {
      if (e.round != index || e.skipped) continue;
      m.tokens_round += e.end - e.start;
      m.entities += static_cast<int>(e.entities.size());
      ++m.answers;
    }
    long before = 0;
    for (const auto& r : s.rounds)
      if (r.index < index && r.metrics) before = r.metrics->tokens_cumulative;
    m.tokens_cumulative = before + m.tokens_round;
    if (!s.gold.empty()) m.annotator = annotator_counts(s, index);
    if (!s.test.empty()) m.test = span_f1(predict(model, s.test), s.test, s.scheme).counts;
    save_snapshot(p.dir, snapshot_name(index), model);
    ProjectRound& round = s.rounds[index - 1];
    round.metrics = m;
    round.status = RoundStatus::kClosed;
    s.current_model = snapshot_name(index);
    p.model = std::move(model);
    p.save_meta();
  } catch (const std::exception& e) {
    std::lock_guard<std::mutex> lock(p.mu);
    ProjectRound& round = p.state.rounds[index - 1];
    round.status = RoundStatus::kOpen;
    round.error = e.what();
    try {
      p.save_meta();
    } catch (const std::exception&) {
    }
  }
}

struct HttpServer::Impl {
  httplib::Server server;
};

HttpServer::HttpServer(AnnotationService& service) : impl_(std::make_unique<Impl>()) {
  auto bridge = [&service](const httplib::Request& req, httplib::Response& res) {
    Request r{req.method, req.path, {}, req.body};
    for (const auto& [k, v] : req.params) r.query[k] = v;
    Response out = service.handle(r);
    res.status = out.status;
    if (!out.body.empty()) res.set_content(out.body, "application/json");
  };
  impl_->server.Get(".*", bridge);
  impl_->server.Post(".*", bridge);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  if (!impl_->server.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

}  // namespace etal
