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

#include "etal/project.h"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <json.hpp>

#include "etal/errors.h"

namespace etal {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json counts_to_json(const SpanCounts& c) { return {{"gold", c.gold}, {"predicted", c.predicted}, {"correct", c.correct}}; }

SpanCounts counts_from_json(const json& j) {
  return {j.at("gold").get<long>(), j.at("predicted").get<long>(), j.at("correct").get<long>()};
}

json entities_to_json(const std::vector<Entity>& es) {
  json out = json::array();
  for (const Entity& e : es) out.push_back({e.start, e.end, e.type});
  return out;
}

std::vector<Entity> entities_from_json(const json& j) {
  std::vector<Entity> out;
  for (const auto& e : j) out.push_back({e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<int>()});
  return out;
}

json config_to_json(const ProjectConfig& c) {
  const FeatureConfig& f = c.features;
  return {{"scheme", scheme_name(c.scheme.scheme)},
          {"learning_rate", c.scheme.learning_rate},
          {"first_round_learning_rate", c.scheme.first_round_learning_rate},
          {"epochs", c.scheme.epochs},
          {"max_span_length", c.selection.max_span_length},
          {"entropy_threshold", c.selection.entropy_threshold},
          {"budget", c.budget},
          {"seed", c.seed},
          {"session_minutes", c.session_minutes},
          {"features",
           {{"hash_bits", f.hash_bits},
            {"word", f.word},
            {"lowercase", f.lowercase},
            {"affix_length", f.affix_length},
            {"shape", f.shape},
            {"context", f.context},
            {"in_embeddings", f.in_embeddings},
            {"embedding_components", f.embedding_components}}}};
}

ProjectConfig config_from_json(const json& j) {
  ProjectConfig c;
  c.scheme.scheme = parse_scheme(j.at("scheme").get<std::string>());
  c.scheme.learning_rate = j.at("learning_rate").get<double>();
  c.scheme.first_round_learning_rate = j.at("first_round_learning_rate").get<double>();
  c.scheme.epochs = j.at("epochs").get<int>();
  c.selection.max_span_length = j.at("max_span_length").get<int>();
  c.selection.entropy_threshold = j.at("entropy_threshold").get<double>();
  c.budget = j.at("budget").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.session_minutes = j.at("session_minutes").get<int>();
  const json& f = j.at("features");
  c.features.hash_bits = f.at("hash_bits").get<int>();
  c.features.word = f.at("word").get<bool>();
  c.features.lowercase = f.at("lowercase").get<bool>();
  c.features.affix_length = f.at("affix_length").get<int>();
  c.features.shape = f.at("shape").get<bool>();
  c.features.context = f.at("context").get<bool>();
  c.features.in_embeddings = f.at("in_embeddings").get<bool>();
  c.features.embedding_components = f.at("embedding_components").get<int>();
  return c;
}

RoundStatus parse_status(const std::string& s) {
  if (s == "open") return RoundStatus::kOpen;
  if (s == "finalizing") return RoundStatus::kFinalizing;
  if (s == "closed") return RoundStatus::kClosed;
  throw Error("unknown round status '" + s + "'");
}

json round_to_json(const ProjectRound& r) {
  json j;
  j["index"] = r.index;
  j["status"] = round_status_name(r.status);
  j["strategy"] = strategy_name(r.batch.strategy);
  j["token_cost"] = r.batch.token_cost;
  j["warnings"] = r.batch.warnings;
  j["items"] = json::array();
  for (const auto& it : r.batch.items)
    j["items"].push_back({{"seq_index", it.seq_index},
                          {"seq_id", it.seq_id},
                          {"start", it.start},
                          {"end", it.end},
                          {"surface", it.surface},
                          {"score", it.score}});
  j["sessions"] = json::array();
  for (const auto& s : r.sessions)
    j["sessions"].push_back({{"id", s.id},
                             {"annotator", s.annotator},
                             {"mode", strategy_name(s.mode)},
                             {"start_ms", s.start_ms},
                             {"duration_s", s.duration_s},
                             {"served", s.served},
                             {"completed", s.completed}});
  if (r.metrics) {
    const RoundMetrics& m = *r.metrics;
    json mj = {{"tokens_round", m.tokens_round},
               {"tokens_cumulative", m.tokens_cumulative},
               {"answers", m.answers},
               {"entities", m.entities}};
    if (m.annotator) mj["annotator"] = counts_to_json(*m.annotator);
    if (m.test) mj["test"] = counts_to_json(*m.test);
    j["metrics"] = mj;
  }
  j["error"] = r.error;
  return j;
}

ProjectRound round_from_json(const json& j) {
  ProjectRound r;
  r.index = j.at("index").get<int>();
  r.status = parse_status(j.at("status").get<std::string>());
  r.batch.strategy = parse_strategy(j.at("strategy").get<std::string>());
  r.batch.token_cost = j.at("token_cost").get<int>();
  r.batch.warnings = j.at("warnings").get<std::vector<std::string>>();
  for (const auto& it : j.at("items"))
    r.batch.items.push_back({it.at("seq_index").get<int>(), it.at("seq_id").get<std::string>(),
                             it.at("start").get<int>(), it.at("end").get<int>(),
                             it.at("surface").get<std::string>(), it.at("score").get<double>()});
  for (const auto& s : j.at("sessions"))
    r.sessions.push_back({s.at("id").get<std::string>(), s.at("annotator").get<std::string>(),
                          parse_strategy(s.at("mode").get<std::string>()), s.at("start_ms").get<std::int64_t>(),
                          s.at("duration_s").get<int>(), s.at("served").get<std::vector<int>>(),
                          s.at("completed").get<std::vector<int>>()});
  if (j.contains("metrics")) {
    const json& mj = j["metrics"];
    RoundMetrics m;
    m.tokens_round = mj.at("tokens_round").get<int>();
    m.tokens_cumulative = mj.at("tokens_cumulative").get<long>();
    m.answers = mj.at("answers").get<int>();
    m.entities = mj.at("entities").get<int>();
    if (mj.contains("annotator")) m.annotator = counts_from_json(mj["annotator"]);
    if (mj.contains("test")) m.test = counts_from_json(mj["test"]);
    r.metrics = m;
  }
  r.error = j.at("error").get<std::string>();
  return r;
}

std::string round_file(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%03d.json", index);
  return buf;
}

// Reads a file that must exist; any failure is reported as corruption of that file.
std::string read_required(const fs::path& p) {
  if (!fs::exists(p)) throw CorruptFileError("missing project file " + p.string());
  return read_file(p.string());
}

json parse_json_file(const fs::path& p) {
  try {
    return json::parse(read_required(p));
  } catch (const json::exception& e) {
    throw CorruptFileError(p.string() + ": " + e.what());
  }
}

std::vector<LabeledSequence> load_corpus(const fs::path& p, const LabelScheme& scheme, std::size_t expected) {
  if (!fs::exists(p)) {
    if (expected != 0) throw CorruptFileError("missing project file " + p.string());
    return {};
  }
  std::string text = read_file(p.string());
  if (!text.empty() && text.back() != '\n') throw CorruptFileError(p.string() + ": truncated final line");
  std::vector<LabeledSequence> out;
  try {
    out = parse_jsonl(text, scheme);
  } catch (const Error& e) {
    throw CorruptFileError(p.string() + ": " + e.what());
  }
  if (out.size() != expected)
    throw CorruptFileError(p.string() + ": expected " + std::to_string(expected) + " sequences, found " +
                           std::to_string(out.size()));
  return out;
}

void save_corpus(const fs::path& p, const std::vector<LabeledSequence>& seqs, const LabelScheme& scheme) {
  if (seqs.empty()) {
    fs::remove(p);
    return;
  }
  write_file(p.string(), write_jsonl(seqs, scheme));
}

}  // namespace

std::string round_status_name(RoundStatus s) {
  switch (s) {
    case RoundStatus::kOpen: return "open";
    case RoundStatus::kFinalizing: return "finalizing";
    case RoundStatus::kClosed: return "closed";
  }
  return "?";
}

ProjectRound* ProjectState::open_round() {
  for (auto& r : rounds)
    if (r.status != RoundStatus::kClosed) return &r;
  return nullptr;
}

ProjectLock::ProjectLock(const std::string& dir) {
  fs::create_directories(dir);
  std::string path = (fs::path(dir) / ".lock").string();
  fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error("cannot open lock file " + path);
  if (::flock(fd_, LOCK_EX) != 0) {
    ::close(fd_);
    throw Error("cannot lock " + path);
  }
}

ProjectLock::~ProjectLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

std::string event_to_json(const AnnotationEvent& e) {
  json j = {{"event_id", e.event_id}, {"round", e.round},        {"item", e.item},
            {"session", e.session},   {"annotator", e.annotator}, {"time_ms", e.time_ms},
            {"skipped", e.skipped},   {"start", e.start},         {"end", e.end},
            {"entities", entities_to_json(e.entities)}};
  return j.dump();
}

AnnotationEvent event_from_json(std::string_view line) {
  json j = json::parse(line);
  AnnotationEvent e;
  e.event_id = j.at("event_id").get<std::string>();
  e.round = j.at("round").get<int>();
  e.item = j.at("item").get<int>();
  e.session = j.at("session").get<std::string>();
  e.annotator = j.at("annotator").get<std::string>();
  e.time_ms = j.at("time_ms").get<std::int64_t>();
  e.skipped = j.at("skipped").get<bool>();
  e.start = j.at("start").get<int>();
  e.end = j.at("end").get<int>();
  e.entities = entities_from_json(j.at("entities"));
  return e;
}

namespace {

void write_meta(const ProjectState& state, const fs::path& dir) {
  fs::create_directories(dir / "rounds");
  for (const auto& r : state.rounds)
    write_file((dir / "rounds" / round_file(r.index)).string(), round_to_json(r).dump(2) + "\n");
  for (const auto& entry : fs::directory_iterator(dir / "rounds")) {
    int index = std::atoi(entry.path().stem().string().c_str());
    if (index < 1 || index > static_cast<int>(state.rounds.size())) fs::remove(entry.path());
  }
  // project.json goes last: it names the rounds the other files must provide.
  json j = {{"schema_version", state.schema_version},
            {"name", state.name},
            {"entity_types", state.scheme.entity_types()},
            {"config", config_to_json(state.config)},
            {"rounds", state.rounds.size()},
            {"corpora",
             {{"pool", state.pool.size()},
              {"gold", state.gold.size()},
              {"transferred", state.transferred.size()},
              {"test", state.test.size()}}},
            {"current_model", state.current_model}};
  write_file((dir / "project.json").string(), j.dump(2) + "\n");
}

}  // namespace

void save_project(const ProjectState& state, const std::string& dir_name) {
  ProjectLock lock(dir_name);
  fs::path dir(dir_name);
  fs::create_directories(dir / "models");
  save_corpus(dir / "pool.jsonl", state.pool, state.scheme);
  save_corpus(dir / "gold.jsonl", state.gold, state.scheme);
  save_corpus(dir / "transferred.jsonl", state.transferred, state.scheme);
  save_corpus(dir / "test.jsonl", state.test, state.scheme);
  std::string events;
  for (const auto& e : state.events) events += event_to_json(e) + "\n";
  write_file((dir / "events.jsonl").string(), events);
  write_meta(state, dir);
}

void save_project_meta(const ProjectState& state, const std::string& dir) {
  ProjectLock lock(dir);
  write_meta(state, dir);
}

ProjectState load_project(const std::string& dir_name) {
  if (!fs::is_directory(dir_name)) throw CorruptFileError("no project directory at " + dir_name);
  ProjectLock lock(dir_name);
  fs::path dir(dir_name);
  json j = parse_json_file(dir / "project.json");
  ProjectState s;
  try {
    s.schema_version = j.at("schema_version").get<int>();
  } catch (const json::exception& e) {
    throw CorruptFileError((dir / "project.json").string() + ": " + e.what());
  }
  if (s.schema_version != kProjectSchemaVersion)
    throw VersionError("project schema version " + std::to_string(s.schema_version) +
                       " cannot be read by this build (expects " + std::to_string(kProjectSchemaVersion) +
                       "); migrate the project first");
  std::size_t rounds = 0;
  json sizes;
  try {
    sizes = j.at("corpora");
    s.name = j.at("name").get<std::string>();
    s.scheme = LabelScheme(j.at("entity_types").get<std::vector<std::string>>());
    s.config = config_from_json(j.at("config"));
    rounds = j.at("rounds").get<std::size_t>();
    s.current_model = j.at("current_model").get<std::string>();
  } catch (const json::exception& e) {
    throw CorruptFileError((dir / "project.json").string() + ": " + e.what());
  } catch (const Error& e) {
    throw CorruptFileError((dir / "project.json").string() + ": " + e.what());
  }

  s.pool = load_corpus(dir / "pool.jsonl", s.scheme, sizes.at("pool").get<std::size_t>());
  s.gold = load_corpus(dir / "gold.jsonl", s.scheme, sizes.at("gold").get<std::size_t>());
  s.transferred = load_corpus(dir / "transferred.jsonl", s.scheme, sizes.at("transferred").get<std::size_t>());
  s.test = load_corpus(dir / "test.jsonl", s.scheme, sizes.at("test").get<std::size_t>());
  if (!s.gold.empty() && s.gold.size() != s.pool.size())
    throw CorruptFileError((dir / "gold.jsonl").string() + ": does not match the pool");

  for (std::size_t i = 1; i <= rounds; ++i) {
    fs::path p = dir / "rounds" / round_file(static_cast<int>(i));
    json rj = parse_json_file(p);
    try {
      s.rounds.push_back(round_from_json(rj));
    } catch (const std::exception& e) {
      throw CorruptFileError(p.string() + ": " + e.what());
    }
    if (s.rounds.back().index != static_cast<int>(i)) throw CorruptFileError(p.string() + ": wrong round index");
    for (const auto& item : s.rounds.back().batch.items)
      if (item.seq_index < 0 || item.seq_index >= static_cast<int>(s.pool.size()) ||
          s.pool[item.seq_index].id != item.seq_id || item.start < 0 ||
          item.end > s.pool[item.seq_index].size() || item.start >= item.end)
        throw CorruptFileError(p.string() + ": item " + item.seq_id + " does not match the pool");
  }

  fs::path ep = dir / "events.jsonl";
  std::string events = read_required(ep);
  if (!events.empty() && events.back() != '\n') throw CorruptFileError(ep.string() + ": truncated final line");
  std::size_t pos = 0, line_no = 0;
  while (pos < events.size()) {
    std::size_t nl = events.find('\n', pos);
    ++line_no;
    std::string_view line(events.data() + pos, nl - pos);
    pos = nl + 1;
    try {
      s.events.push_back(event_from_json(line));
    } catch (const json::exception& e) {
      throw CorruptFileError(ep.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
    const AnnotationEvent& e = s.events.back();
    if (e.round < 1 || e.round > static_cast<int>(s.rounds.size()) || e.item < 0 ||
        e.item >= static_cast<int>(s.rounds[e.round - 1].batch.items.size()))
      throw CorruptFileError(ep.string() + ": line " + std::to_string(line_no) + ": unknown round or item");
  }

  if (!s.current_model.empty() && !fs::exists(dir / "models" / s.current_model))
    throw CorruptFileError("missing model snapshot " + (dir / "models" / s.current_model).string());
  return s;
}

void append_event(const std::string& dir, const AnnotationEvent& event) {
  ProjectLock lock(dir);
  std::string path = (fs::path(dir) / "events.jsonl").string();
  std::string line = event_to_json(event) + "\n";
  std::FILE* f = std::fopen(path.c_str(), "ab");
  if (!f) throw Error("cannot open " + path);
  bool ok = std::fwrite(line.data(), 1, line.size(), f) == line.size() && std::fflush(f) == 0 &&
            ::fsync(::fileno(f)) == 0;
  std::fclose(f);
  if (!ok) throw Error("cannot append to " + path);
}

std::string snapshot_name(int round) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%03d.bin", round);
  return buf;
}

void save_snapshot(const std::string& dir, const std::string& name, const CrfModel& model) {
  fs::create_directories(fs::path(dir) / "models");
  write_file((fs::path(dir) / "models" / name).string(), serialize_model(model));
}

CrfModel load_snapshot(const std::string& dir, const std::string& name) {
  return deserialize_model(read_required(fs::path(dir) / "models" / name));
}

AcquiredData replay_events(const ProjectState& state, const SequencePool& pool) {
  AcquiredData data(pool);
  for (const AnnotationEvent& e : state.events) {
    Answer a = e.answer();
    apply_annotations(data, pool, state.rounds.at(e.round - 1).batch, std::span(&a, 1), state.scheme);
  }
  return data;
}

SpanCounts annotator_counts(const ProjectState& state, int round) {
  SpanCounts total;
  for (const AnnotationEvent& e : state.events) {
    if (e.round != round || e.skipped) continue;
    const SelectionItem& item = state.rounds.at(round - 1).batch.items.at(e.item);
    const LabeledSequence& gold = state.gold.at(item.seq_index);
    std::vector<Entity> pred, truth;
    for (Entity x : e.entities) pred.push_back({x.start - e.start, x.end - e.start, x.type});
    for (const Entity& x : extract_entities(gold.labels, state.scheme))
      if (x.start >= e.start && x.end <= e.end) truth.push_back({x.start - e.start, x.end - e.start, x.type});
    int n = e.end - e.start;
    total += span_counts(entities_to_labels(n, pred, state.scheme), entities_to_labels(n, truth, state.scheme),
                         state.scheme);
  }
  return total;
}

}  // namespace etal
