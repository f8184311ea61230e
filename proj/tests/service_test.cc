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

#include <cstdlib>
#include <filesystem>
#include <httplib.h>
#include <json.hpp>
#include <thread>

#include "etal/project.h"
#include "etal/service.h"
#include "etal/synthetic.h"

using namespace etal;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  fs::path root;
  std::int64_t now = 1'000'000;
  std::unique_ptr<AnnotationService> service;
  SyntheticCorpus corpus;
  std::vector<LabeledSequence> pool;

  explicit Fixture(int pool_size = 60) {
    static int counter = 0;
    root = fs::temp_directory_path() / ("etal-service-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(root);
    SyntheticConfig sc;
    sc.pool_size = pool_size;
    sc.dev_size = 1;
    sc.test_size = 20;
    sc.transferred_size = 40;
    sc.entities_per_type = 30;
    corpus = generate_synthetic(sc);
    // Ids as the service assigns them when reading CoNLL.
    pool = parse_conll(write_conll(corpus.pool, corpus.scheme), corpus.scheme);
    start();
  }
  ~Fixture() {
    service.reset();
    fs::remove_all(root);
  }

  void start() {
    ServiceConfig c;
    c.data_root = root.string();
    service = std::make_unique<AnnotationService>(c, [this] { return now; });
  }

  Response call(const std::string& method, const std::string& path, const json& body = json::object(),
                std::map<std::string, std::string> query = {}) {
    return service->handle({method, path, std::move(query), body.dump()});
  }
  json call_json(const std::string& method, const std::string& path, const json& body = json::object(),
                 int expect = 200) {
    Response r = call(method, path, body);
    INFO(method, " ", path, " -> ", r.status, " ", r.body);
    REQUIRE(r.status == expect);
    return json::parse(r.body);
  }

  json project_body(const std::string& name, json config = json::object()) {
    config["epochs"] = 2;
    config["hash_bits"] = 12;
    return {{"name", name},
            {"pool", write_conll(corpus.pool, corpus.scheme)},
            {"transferred", write_conll(corpus.transferred, corpus.scheme)},
            {"test", write_conll(corpus.test, corpus.scheme)},
            {"config", config}};
  }

  json next(const std::string& round, const std::string& session, int expect = 200) {
    Response r = call("GET", "/rounds/" + round + "/next", json::object(), {{"session", session}});
    INFO(r.body);
    REQUIRE(r.status == expect);
    return r.body.empty() ? json() : json::parse(r.body);
  }
};

int count_lines(const fs::path& p) {
  std::string text = read_file(p.string());
  return static_cast<int>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST_CASE("project creation") {
  Fixture f;
  auto created = f.call_json("POST", "/projects", f.project_body("demo"), 201);
  CHECK(created["id"] == "demo");
  CHECK(created["pool"] == 60);
  CHECK(created["gold"] == true);
  CHECK(created["api_version"] == kApiVersion);
  CHECK(fs::exists(f.root / "demo" / "project.json"));
  CHECK(fs::exists(f.root / "demo" / "models" / "000.bin"));

  CHECK(f.call("POST", "/projects", f.project_body("demo")).status == 409);
  CHECK(f.call("POST", "/projects", f.project_body("bad name")).status == 400);

  SUBCASE("invalid BIO names the offending line") {
    // B-PER opens an entity, so the document is BIO2 and line 3 is invalid.
    json body = {{"name", "broken"}, {"pool", "Ann B-PER\nmet O\nRome I-LOC\n"}};
    Response r = f.call("POST", "/projects", body);
    CHECK(r.status == 400);
    auto j = json::parse(r.body);
    CHECK(j["line"] == 3);
    CHECK(j["field"] == "pool");
    CHECK(j["error"].get<std::string>().find("line 3") != std::string::npos);
  }
  SUBCASE("unknown label") {
    Response r = f.call("POST", "/projects", json{{"name", "b2"}, {"pool", "a O\nb B-FOO\n"}});
    CHECK(r.status == 400);
    CHECK(json::parse(r.body)["line"] == 2);
  }
  SUBCASE("FineTune needs transferred data") {
    json body = {{"name", "nt"}, {"pool", "a O\n"}, {"config", {{"scheme", "FineTune"}}}};
    CHECK(f.call("POST", "/projects", body).status == 400);
  }
  SUBCASE("metrics") {
    auto m = f.call_json("GET", "/projects/demo/metrics");
    CHECK(m["records"].empty());
    CHECK(f.call("GET", "/projects/nope/metrics").status == 404);
  }
}

TEST_CASE("round lifecycle") {
  Fixture f;
  f.call_json("POST", "/projects", f.project_body("demo"), 201);
  auto round = f.call_json("POST", "/projects/demo/rounds", {{"strategy", "ETAL"}, {"budget", 30}}, 201);
  CHECK(round["round"] == "demo.1");
  CHECK(round["token_cost"].get<int>() >= 30);
  const json items = round["items"];
  REQUIRE(items.size() >= 3);
  CHECK(f.call("POST", "/projects/demo/rounds", {{"strategy", "ETAL"}}).status == 409);

  auto session = f.call_json("POST", "/rounds/demo.1/sessions", {{"annotator", "ann"}}, 201);
  std::string sid = session["session"];
  CHECK(session["expires_ms"] == f.now + 20 * 60 * 1000);

  auto first = f.next("demo.1", sid);
  CHECK(first["item"] == "demo.1.0");
  CHECK(first["start"] == items[0]["start"]);
  CHECK(first["whole_sequence"] == false);
  CHECK(first["entity_types"].size() == 4);
  auto second = f.next("demo.1", sid);
  CHECK(second["item"] == "demo.1.1");

  SUBCASE("annotations") {
    int start = first["start"], end = first["end"];
    auto ok = f.call_json("POST", "/items/demo.1.0/annotation", {{"event_id", "e1"}, {"session", sid}, {"type", "PER"}});
    CHECK(ok["duplicate"] == false);
    CHECK(ok["tokens"] == end - start);
    auto item = f.call_json("GET", "/items/demo.1.0");
    REQUIRE(item["annotations"].size() == 1);
    CHECK(item["annotations"][0]["entities"] == json::array({{{"start", start}, {"end", end}, {"type", "PER"}}}));

    fs::path log = f.root / "demo" / "events.jsonl";
    CHECK(count_lines(log) == 1);
    auto again = f.call_json("POST", "/items/demo.1.0/annotation", {{"event_id", "e1"}, {"session", sid}, {"type", "PER"}});
    CHECK(again["duplicate"] == true);
    CHECK(count_lines(log) == 1);

    // Past the end of the sequence.
    int len = static_cast<int>(second["tokens"].size());
    int past = len - second["end"].get<int>() + 1;
    Response oob = f.call("POST", "/items/demo.1.1/annotation",
                          {{"event_id", "e2"}, {"session", sid}, {"type", "LOC"}, {"end_delta", past}});
    CHECK(oob.status == 400);
    CHECK(count_lines(log) == 1);

    auto skip = f.call_json("POST", "/items/demo.1.1/skip", {{"event_id", "e3"}, {"session", sid}});
    CHECK(skip["skipped"] == true);
    CHECK(count_lines(log) == 2);

    // Never dispensed.
    int last = static_cast<int>(items.size()) - 1;
    Response undispensed = f.call("POST", "/items/demo.1." + std::to_string(last) + "/annotation",
                                  {{"event_id", "e4"}, {"session", sid}, {"type", nullptr}});
    CHECK(undispensed.status == 409);
    CHECK(f.call("POST", "/items/demo.1.99/annotation", {{"event_id", "e5"}, {"session", sid}}).status == 404);
    CHECK(f.call("POST", "/items/demo.1.0/annotation", {{"session", sid}}).status == 400);
  }
  SUBCASE("expiry and exhaustion") {
    f.now += 20 * 60 * 1000 - 1;
    f.next("demo.1", sid);
    f.now += 1;
    f.next("demo.1", sid, 410);
    auto s2 = f.call_json("POST", "/rounds/demo.1/sessions", {{"annotator", "bob"}}, 201);
    for (std::size_t i = 3; i < items.size(); ++i) CHECK(f.next("demo.1", s2["session"])["item"] == "demo.1." + std::to_string(i));
    f.next("demo.1", s2["session"], 204);
    CHECK(f.call("GET", "/rounds/demo.1/next").status == 400);
    CHECK(f.call("GET", "/rounds/demo.1/next", {}, {{"session", "nope"}}).status == 404);
  }
  SUBCASE("finalize") {
    f.call_json("POST", "/items/demo.1.0/annotation", {{"event_id", "a"}, {"session", sid}, {"type", nullptr}});
    auto fin = f.call_json("POST", "/rounds/demo.1/finalize", {}, 202);
    CHECK(fin["status"] == "finalizing");
    f.service->wait_idle();
    auto r1 = f.call_json("GET", "/rounds/demo.1");
    CHECK(r1["status"] == "closed");
    CHECK(r1["tokens_annotated"] == first["end"].get<int>() - first["start"].get<int>());
    CHECK(f.call("POST", "/rounds/demo.1/finalize").status == 409);
    CHECK(f.call("POST", "/items/demo.1.1/annotation", {{"event_id", "late"}, {"session", sid}}).status == 409);

    // A round with no annotations still closes and records zero tokens.
    f.call_json("POST", "/projects/demo/rounds", {{"strategy", "RAND"}, {"budget", 10}}, 201);
    f.call_json("POST", "/rounds/demo.2/finalize", {}, 202);
    f.service->wait_idle();
    auto r2 = f.call_json("GET", "/rounds/demo.2");
    CHECK(r2["status"] == "closed");
    CHECK(r2["tokens_annotated"] == 0);

    auto m = f.call_json("GET", "/projects/demo/metrics");
    REQUIRE(m["records"].size() == 2);
    CHECK(m["records"][0]["tokens_cumulative"] == r1["tokens_annotated"]);
    CHECK(m["records"][1]["tokens_cumulative"] == r1["tokens_annotated"]);
    CHECK(m["records"][0].contains("test"));

    auto disk = load_project((f.root / "demo").string());
    CHECK(disk.current_model == "002.bin");
    for (int r = 0; r < 2; ++r) {
      const RoundMetrics& rm = *disk.rounds[r].metrics;
      CHECK(m["records"][r]["tokens_round"] == rm.tokens_round);
      CHECK(m["records"][r]["tokens_cumulative"] == rm.tokens_cumulative);
      CHECK(m["records"][r]["test"]["f1"] == rm.test->f1());
      CHECK(m["records"][r]["annotator"]["correct"] == rm.annotator->correct);
    }
  }
}

TEST_CASE("cumulative tokens grow over annotated rounds") {
  Fixture f;
  f.call_json("POST", "/projects", f.project_body("demo"), 201);
  std::vector<int> cumulative;
  for (int r = 1; r <= 2; ++r) {
    std::string rid = "demo." + std::to_string(r);
    f.call_json("POST", "/projects/demo/rounds", {{"strategy", "ETAL"}, {"budget", 20}}, 201);
    std::string sid = f.call_json("POST", "/rounds/" + rid + "/sessions", {{"annotator", "a"}}, 201)["session"];
    auto item = f.next(rid, sid);
    f.call_json("POST", "/items/" + item["item"].get<std::string>() + "/annotation",
                {{"event_id", rid}, {"session", sid}, {"type", "ORG"}});
    f.call_json("POST", "/rounds/" + rid + "/finalize", {}, 202);
    f.service->wait_idle();
  }
  auto m = f.call_json("GET", "/projects/demo/metrics");
  REQUIRE(m["records"].size() == 2);
  CHECK(m["records"][0]["tokens_cumulative"].get<int>() > 0);
  CHECK(m["records"][1]["tokens_cumulative"].get<int>() > m["records"][0]["tokens_cumulative"].get<int>());
}

TEST_CASE("annotator F1 against the oracle") {
  Fixture f;
  f.call_json("POST", "/projects", f.project_body("demo"), 201);
  f.call_json("POST", "/projects/demo/rounds", {{"strategy", "ETAL"}, {"budget", 60}}, 201);
  std::string sid = f.call_json("POST", "/rounds/demo.1/sessions", {{"annotator", "a"}}, 201)["session"];
  const LabelScheme& scheme = f.corpus.scheme;

  // Every item is answered PER. Items whose span cuts a gold entity are
  // skipped, so slicing the gold labels to the region is exact.
  std::vector<LabeledSequence> pred, gold;
  int answered = 0;
  for (int n = 0;; ++n) {
    Response r = f.call("GET", "/rounds/demo.1/next", {}, {{"session", sid}});
    if (r.status == 204) break;
    REQUIRE(r.status == 200);
    json item = json::parse(r.body);
    int s = item["start"], e = item["end"];
    const LabeledSequence* seq = nullptr;
    for (const auto& g : f.pool)
      if (g.id == item["seq_id"]) seq = &g;
    REQUIRE(seq);
    bool cuts = false;
    for (const Entity& x : extract_entities(seq->labels, scheme))
      if (x.start < e && s < x.end && (x.start < s || x.end > e)) cuts = true;
    std::string path = "/items/" + item["item"].get<std::string>();
    std::string ev = "ev" + std::to_string(n);
    if (cuts) {
      f.call_json("POST", path + "/skip", {{"event_id", ev}, {"session", sid}});
      continue;
    }
    f.call_json("POST", path + "/annotation", {{"event_id", ev}, {"session", sid}, {"type", "PER"}});
    ++answered;
    std::vector<std::string> toks(seq->tokens.begin() + s, seq->tokens.begin() + e);
    std::vector<Label> mine(e - s, scheme.inside(0));
    mine[0] = scheme.begin(0);
    pred.push_back({seq->id, toks, mine});
    gold.push_back({seq->id, toks, std::vector<Label>(seq->labels.begin() + s, seq->labels.begin() + e)});
  }
  REQUIRE(answered > 3);
  f.call_json("POST", "/rounds/demo.1/finalize", {}, 202);
  f.service->wait_idle();
  auto r = f.call_json("GET", "/rounds/demo.1");
  auto expect = span_f1(pred, gold, scheme);
  CHECK(r["annotator"]["gold"] == expect.counts.gold);
  CHECK(r["annotator"]["predicted"] == expect.counts.predicted);
  CHECK(r["annotator"]["correct"] == expect.counts.correct);
  CHECK(r["annotator"]["f1"].get<double>() == expect.f1);
  CHECK(r["annotator"]["precision"].get<double>() == expect.precision);
}

TEST_CASE("overlapping annotations conflict") {
  Fixture f(4);
  f.call_json("POST", "/projects", f.project_body("demo"), 201);
  auto round = f.call_json("POST", "/projects/demo/rounds", {{"strategy", "RAND"}, {"budget", 1000}}, 201);
  CHECK(round["warning"] == true);
  std::string sid = f.call_json("POST", "/rounds/demo.1/sessions", {{"annotator", "a"}}, 201)["session"];
  std::vector<json> served;
  for (;;) {
    Response r = f.call("GET", "/rounds/demo.1/next", {}, {{"session", sid}});
    if (r.status == 204) break;
    served.push_back(json::parse(r.body));
  }
  // Two items of one sequence where the first ends right before the second.
  int a = -1, b = -1;
  for (std::size_t i = 0; i < served.size() && a < 0; ++i)
    for (std::size_t j = 0; j < served.size(); ++j)
      if (served[i]["seq_id"] == served[j]["seq_id"] && served[i]["end"] == served[j]["start"]) {
        a = static_cast<int>(i);
        b = static_cast<int>(j);
        break;
      }
  REQUIRE(a >= 0);
  std::string seq = served[a]["seq_id"];
  int as = served[a]["start"], ae = served[a]["end"];
  f.call_json("POST", "/items/" + served[a]["item"].get<std::string>() + "/annotation",
              {{"event_id", "x1"}, {"session", sid}, {"type", "LOC"}, {"end_delta", 1}});
  Response r = f.call("POST", "/items/" + served[b]["item"].get<std::string>() + "/annotation",
                      {{"event_id", "x2"}, {"session", sid}, {"type", nullptr}});
  CHECK(r.status == 409);
  std::string msg = json::parse(r.body)["error"];
  int bs = served[b]["start"], be = served[b]["end"];
  CHECK(msg.find(seq + "[" + std::to_string(bs) + "," + std::to_string(be) + ") O") != std::string::npos);
  CHECK(msg.find(seq + "[" + std::to_string(as) + "," + std::to_string(ae + 1) + ") LOC") != std::string::npos);
  CHECK(f.call_json("GET", "/items/" + served[b]["item"].get<std::string>())["annotations"].empty());
}

TEST_CASE("SAL rounds and an exhausted pool") {
  Fixture f(3);
  f.call_json("POST", "/projects", f.project_body("demo"), 201);
  auto round = f.call_json("POST", "/projects/demo/rounds", {{"strategy", "SAL"}, {"budget", 1000}}, 201);
  REQUIRE(round["items"].size() == 3);
  for (const auto& it : round["items"]) {
    CHECK(it["start"] == 0);
    const LabeledSequence* seq = nullptr;
    for (const auto& g : f.pool)
      if (g.id == it["seq_id"]) seq = &g;
    REQUIRE(seq);
    CHECK(it["end"] == seq->size());
  }
  std::string sid = f.call_json("POST", "/rounds/demo.1/sessions", {{"annotator", "a"}}, 201)["session"];
  auto first = f.next("demo.1", sid);
  CHECK(first["whole_sequence"] == true);
  CHECK(first["mode"] == "SAL");
  // Default answer: everything O.
  auto plain = f.call_json("POST", "/items/demo.1.0/annotation", {{"event_id", "s0"}, {"session", sid}});
  CHECK(plain["entities"].empty());
  CHECK(plain["end"] == first["tokens"].size());
  f.next("demo.1", sid);
  auto typed = f.call_json("POST", "/items/demo.1.1/annotation",
                           {{"event_id", "s1"}, {"session", sid}, {"entities", {{{"start", 0}, {"end", 1}, {"type", "MISC"}}}}});
  CHECK(typed["entities"][0]["type"] == "MISC");
  f.next("demo.1", sid);
  f.call_json("POST", "/items/demo.1.2/annotation", {{"event_id", "s2"}, {"session", sid}});
  f.call_json("POST", "/rounds/demo.1/finalize", {}, 202);
  f.service->wait_idle();

  auto empty = f.call_json("POST", "/projects/demo/rounds", {{"strategy", "SAL"}});
  CHECK(empty["items"].empty());
  CHECK(empty["warning"] == true);
  CHECK(empty["round"].is_null());
}

TEST_CASE("retraining failure keeps the round open") {
  Fixture f;
  f.call_json("POST", "/projects", f.project_body("demo"), 201);
  {
    // Swap in a diverging learning rate through the project file.
    f.service.reset();
    auto s = load_project((f.root / "demo").string());
    s.config.scheme.first_round_learning_rate = 1e300;
    s.config.scheme.learning_rate = 1e300;
    save_project_meta(s, (f.root / "demo").string());
    f.start();
  }
  f.call_json("POST", "/projects/demo/rounds", {{"strategy", "ETAL"}, {"budget", 20}}, 201);
  std::string sid = f.call_json("POST", "/rounds/demo.1/sessions", {{"annotator", "a"}}, 201)["session"];
  for (int i = 0; i < 3; ++i) {
    auto item = f.next("demo.1", sid);
    f.call_json("POST", "/items/" + item["item"].get<std::string>() + "/annotation",
                {{"event_id", "e" + std::to_string(i)}, {"session", sid}, {"type", "PER"}});
  }
  f.call_json("POST", "/rounds/demo.1/finalize", {}, 202);
  f.service->wait_idle();
  auto r = f.call_json("GET", "/rounds/demo.1");
  CHECK(r["status"] == "open");
  CHECK_FALSE(r["error"].get<std::string>().empty());
  CHECK(f.call_json("GET", "/projects/demo")["current_model"] == "000.bin");
  // Still open, so it can be finalized again.
  CHECK(f.call("POST", "/rounds/demo.1/finalize").status == 202);
  f.service->wait_idle();
}

TEST_CASE("state survives a restart") {
  Fixture f;
  f.call_json("POST", "/projects", f.project_body("demo"), 201);
  f.call_json("POST", "/projects/demo/rounds", {{"strategy", "ETAL"}, {"budget", 20}}, 201);
  std::string sid = f.call_json("POST", "/rounds/demo.1/sessions", {{"annotator", "a"}}, 201)["session"];
  auto item = f.next("demo.1", sid);
  std::string path = "/items/" + item["item"].get<std::string>();
  f.call_json("POST", path + "/annotation", {{"event_id", "e0"}, {"session", sid}, {"type", "LOC"}});
  auto before = f.call_json("GET", path);

  f.start();
  CHECK(f.call_json("GET", path) == before);
  CHECK(f.call_json("POST", path + "/annotation", {{"event_id", "e0"}, {"session", sid}, {"type", "LOC"}})["duplicate"] ==
        true);
  // Dispensing resumes after the items already served.
  auto next = f.next("demo.1", sid);
  CHECK(next["item"] == "demo.1.1");
  CHECK(f.call("POST", "/projects/demo/rounds", {{"strategy", "ETAL"}}).status == 409);
}

TEST_CASE("service configuration") {
  fs::path cfg = fs::temp_directory_path() / ("etal-config-" + std::to_string(::getpid()) + ".json");
  write_file(cfg.string(), R"({"data_root": "/tmp/from-file", "port": 9001})");
  ::unsetenv("ETAL_DATA_ROOT");
  ::unsetenv("ETAL_PORT");
  auto c = load_service_config(cfg.string());
  CHECK(c.data_root == "/tmp/from-file");
  CHECK(c.port == 9001);
  ::setenv("ETAL_PORT", "9100", 1);
  ::setenv("ETAL_DATA_ROOT", "/tmp/from-env", 1);
  c = load_service_config(cfg.string());
  CHECK(c.port == 9100);
  CHECK(c.data_root == "/tmp/from-env");
  ::setenv("ETAL_PORT", "http", 1);
  CHECK_THROWS(load_service_config(""));
  ::unsetenv("ETAL_DATA_ROOT");
  ::unsetenv("ETAL_PORT");
  fs::remove(cfg);
}

TEST_CASE("HTTP front end") {
  Fixture f(10);
  HttpServer server(*f.service);
  int port = server.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  std::thread loop([&] { server.listen(); });
  httplib::Client client("127.0.0.1", port);
  client.set_read_timeout(30, 0);
  auto created = client.Post("/projects", f.project_body("web").dump(), "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  auto round = client.Post("/projects/web/rounds", R"({"strategy": "ETAL", "budget": 10})", "application/json");
  REQUIRE(round);
  CHECK(round->status == 201);
  auto session = client.Post("/rounds/web.1/sessions", R"({"annotator": "a"})", "application/json");
  REQUIRE(session);
  std::string sid = json::parse(session->body)["session"];
  auto next = client.Get("/rounds/web.1/next?session=" + sid);
  REQUIRE(next);
  CHECK(next->status == 200);
  CHECK(json::parse(next->body)["item"] == "web.1.0");
  auto missing = client.Get("/projects/none/metrics");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  server.stop();
  loop.join();
}
