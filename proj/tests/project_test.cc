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

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "etal/errors.h"
#include "etal/project.h"
#include "etal/synthetic.h"

using namespace etal;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("etal-project-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
  static inline int counter = 0;
};

std::vector<LabeledSequence> strip(std::vector<LabeledSequence> seqs) {
  for (auto& s : seqs) s.labels.clear();
  return seqs;
}

ProjectState fresh_project() {
  ProjectState s;
  s.name = "demo";
  s.scheme = LabelScheme::conll();
  s.config.features.hash_bits = 14;
  s.config.scheme.epochs = 2;
  s.pool = {{"p0", {"Ann", "met", "Bob", "."}, {}}, {"p1", {"in", "Rome"}, {}}};
  s.current_model = snapshot_name(0);
  return s;
}

// Three ETAL rounds answered by the oracle, 40 answers in total, recorded
// the way the service records them.
ProjectState simulated_project() {
  SyntheticConfig sc;
  sc.pool_size = 200;
  sc.dev_size = 10;
  sc.test_size = 30;
  sc.transferred_size = 80;
  sc.entities_per_type = 60;
  auto corpus = generate_synthetic(sc);

  ProjectState s;
  s.name = "sim";
  s.scheme = corpus.scheme;
  s.config.features.hash_bits = 14;
  s.config.scheme.epochs = 2;
  s.pool = strip(corpus.pool);
  s.gold = corpus.pool;
  s.transferred = corpus.transferred;
  s.test = corpus.test;

  CrfModel blank(s.scheme, s.config.features);
  auto setup = prepare_training(blank, s.transferred, s.config.scheme, 3);
  CrfModel model = setup.initial;
  SequencePool pool(s.pool, blank);
  AcquiredData acquired(pool);
  const int per_round[] = {13, 13, 14};
  long cumulative = 0;
  for (int r = 1; r <= 3; ++r) {
    ProjectRound round;
    round.index = r;
    round.batch = select_batch(Strategy::kEtal, pool, model, 200, s.config.selection, acquired.coverage, r);
    round.sessions.push_back({"s" + std::to_string(r), "ann", Strategy::kEtal, 1000 * r, 1200, {}, {}});
    auto answers = oracle_answer(round.batch, s.gold, s.scheme);
    REQUIRE(answers.size() >= 14u);
    RoundMetrics m;
    for (int i = 0; i < per_round[r - 1]; ++i) {
      const Answer& a = answers[i];
      round.sessions[0].served.push_back(i);
      round.sessions[0].completed.push_back(i);
      AnnotationEvent e{"e" + std::to_string(r) + "-" + std::to_string(i), r, i, round.sessions[0].id, "ann",
                        1000 * r + i, i % 7 == 6, a.start, a.end, a.entities};
      if (e.skipped) e.entities.clear();
      s.events.push_back(e);
      Answer applied = e.answer();
      auto res = apply_annotations(acquired, pool, round.batch, std::span(&applied, 1), s.scheme);
      m.tokens_round += res.tokens;
      m.answers += res.answers;
      m.entities += res.entities;
    }
    cumulative += m.tokens_round;
    m.tokens_cumulative = cumulative;
    round.status = RoundStatus::kClosed;
    s.rounds.push_back(round);
    m.annotator = annotator_counts(s, r);
    model = retrain(setup, make_examples(pool, acquired), r, s.config.scheme, 7);
    m.test = span_f1(predict(model, s.test), s.test, s.scheme).counts;
    s.rounds.back().metrics = m;
  }
  s.current_model = snapshot_name(3);
  return s;
}

void save_with_model(const ProjectState& s, const std::string& dir) {
  save_project(s, dir);
  save_snapshot(dir, s.current_model, CrfModel(s.scheme, s.config.features));
}

void truncate_file(const fs::path& p, std::size_t drop) {
  auto size = fs::file_size(p);
  fs::resize_file(p, size - drop);
}

}  // namespace

TEST_CASE("fresh project round trip") {
  TempDir dir;
  auto s = fresh_project();
  save_with_model(s, dir.str());
  CHECK(fs::exists(dir.path / "project.json"));
  CHECK(fs::exists(dir.path / "pool.jsonl"));
  CHECK(fs::exists(dir.path / "events.jsonl"));
  CHECK(load_project(dir.str()) == s);
}

TEST_CASE("simulated project with three rounds and forty annotations") {
  TempDir dir;
  auto s = simulated_project();
  REQUIRE(s.rounds.size() == 3);
  REQUIRE(s.events.size() == 40);
  save_with_model(s, dir.str());
  for (int r = 1; r <= 3; ++r) {
    char name[16];
    std::snprintf(name, sizeof name, "%03d.json", r);
    CHECK(fs::exists(dir.path / "rounds" / name));
  }
  auto back = load_project(dir.str());
  CHECK(back.name == s.name);
  CHECK(back.scheme == s.scheme);
  CHECK(back.config == s.config);
  CHECK(back.pool == s.pool);
  CHECK(back.gold == s.gold);
  CHECK(back.transferred == s.transferred);
  CHECK(back.test == s.test);
  REQUIRE(back.rounds.size() == s.rounds.size());
  for (std::size_t r = 0; r < s.rounds.size(); ++r) {
    CHECK(back.rounds[r].batch == s.rounds[r].batch);
    CHECK(back.rounds[r].sessions == s.rounds[r].sessions);
    CHECK(back.rounds[r].metrics == s.rounds[r].metrics);
    CHECK(back.rounds[r].status == s.rounds[r].status);
  }
  REQUIRE(back.events.size() == s.events.size());
  for (std::size_t i = 0; i < s.events.size(); ++i) CHECK(back.events[i] == s.events[i]);
  CHECK(back.current_model == s.current_model);
  CHECK(back == s);
}

TEST_CASE("event log replay") {
  auto s = simulated_project();
  CrfModel blank(s.scheme, s.config.features);
  SequencePool pool(s.pool, blank);

  // Reference state: each round's accepted answers applied as one batch.
  AcquiredData direct(pool);
  for (const auto& round : s.rounds) {
    std::vector<Answer> answers;
    for (const auto& e : s.events)
      if (e.round == round.index) answers.push_back(e.answer());
    apply_annotations(direct, pool, round.batch, answers, s.scheme);
  }
  auto replayed = replay_events(s, pool);
  CHECK(replayed.labels == direct.labels);
  CHECK(replayed.tokens == direct.tokens);
  CHECK(replayed.tokens == s.rounds.back().metrics->tokens_cumulative);

  TempDir dir;
  save_with_model(s, dir.str());
  auto again = replay_events(load_project(dir.str()), pool);
  CHECK(again.labels == direct.labels);
  auto a = make_examples(pool, again), b = make_examples(pool, direct);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].target == b[i].target);
    CHECK(a[i].features == b[i].features);
  }
}

TEST_CASE("annotator counts") {
  ProjectState s = fresh_project();
  s.gold = {{"p0", {"Ann", "met", "Bob", "."}, {1, 0, 1, 0}}, {"p1", {"in", "Rome"}, {0, 5}}};
  ProjectRound r;
  r.index = 1;
  r.batch.items = {{0, "p0", 0, 1, "Ann", 0}, {0, "p0", 2, 3, "Bob", 0}, {1, "p1", 1, 2, "Rome", 0}};
  s.rounds.push_back(r);
  // Right, wrong type, and a region that cuts off nothing.
  s.events = {{"a", 1, 0, "s", "x", 0, false, 0, 1, {{0, 1, 0}}},
              {"b", 1, 1, "s", "x", 0, false, 2, 3, {{2, 3, 1}}},
              {"c", 1, 2, "s", "x", 0, false, 0, 2, {}}};
  auto c = annotator_counts(s, 1);
  // Gold inside the regions: Ann, Bob, Rome. Predicted: Ann (correct), Bob as ORG.
  CHECK(c.gold == 3);
  CHECK(c.predicted == 2);
  CHECK(c.correct == 1);

  std::vector<LabeledSequence> pred{{"a", {"Ann"}, {1}}, {"b", {"Bob"}, {3}}, {"c", {"in", "Rome"}, {0, 0}}};
  std::vector<LabeledSequence> gold{{"a", {"Ann"}, {1}}, {"b", {"Bob"}, {1}}, {"c", {"in", "Rome"}, {0, 5}}};
  CHECK(span_f1(pred, gold, s.scheme).counts == c);
}

TEST_CASE("appended events are loaded") {
  TempDir dir;
  auto s = fresh_project();
  ProjectRound r;
  r.index = 1;
  r.batch.items = {{1, "p1", 1, 2, "Rome", 0.5}};
  s.rounds.push_back(r);
  save_with_model(s, dir.str());
  AnnotationEvent e{"ev1", 1, 0, "s1", "ann", 42, false, 1, 2, {{1, 2, 2}}};
  append_event(dir.str(), e);
  auto back = load_project(dir.str());
  REQUIRE(back.events.size() == 1);
  CHECK(back.events[0] == e);
}

TEST_CASE("corrupt and incompatible projects") {
  TempDir dir;
  auto s = simulated_project();
  save_with_model(s, dir.str());

  SUBCASE("truncated project.json") {
    truncate_file(dir.path / "project.json", 10);
    CHECK_THROWS_AS(load_project(dir.str()), CorruptFileError);
  }
  SUBCASE("truncated event log") {
    truncate_file(dir.path / "events.jsonl", 5);
    CHECK_THROWS_AS(load_project(dir.str()), CorruptFileError);
  }
  SUBCASE("pool truncated at a line boundary") {
    auto text = read_file((dir.path / "pool.jsonl").string());
    text.erase(text.rfind('\n', text.size() - 2) + 1);
    write_file((dir.path / "pool.jsonl").string(), text);
    CHECK_THROWS_AS(load_project(dir.str()), CorruptFileError);
  }
  SUBCASE("missing round file") {
    fs::remove(dir.path / "rounds" / "002.json");
    CHECK_THROWS_AS(load_project(dir.str()), CorruptFileError);
  }
  SUBCASE("newer schema") {
    auto text = read_file((dir.path / "project.json").string());
    auto at = text.find("\"schema_version\": 1");
    REQUIRE(at != std::string::npos);
    text.replace(at, 19, "\"schema_version\": 2");
    write_file((dir.path / "project.json").string(), text);
    CHECK_THROWS_AS(load_project(dir.str()), VersionError);
  }
  SUBCASE("missing directory") {
    CHECK_THROWS_AS(load_project((dir.path / "nope").string()), CorruptFileError);
  }
}
