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

#include <sys/wait.h>

#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <json.hpp>
#include <sstream>

#include "etal/corpus.h"
#include "etal/synthetic.h"

using namespace etal;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
};

// Runs the CLI inside `dir`, capturing stdout and stderr together.
Run run(const fs::path& dir, const std::string& args) {
  std::string cmd = "cd '" + dir.string() + "' && '" ETAL_CLI "' " + args + " 2>&1";
  FILE* p = ::popen(cmd.c_str(), "r");
  REQUIRE(p);
  std::string out;
  char buf[4096];
  for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, p)) > 0;) out.append(buf, n);
  int status = ::pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

struct Workdir {
  fs::path path;
  Workdir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("etal-cli-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~Workdir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

const char* kSmallSim = "simulate --strategy etal --rounds 2 --budget 200 --seed 1 --pool-size 300 --test-size 60 "
                        "--transferred-size 80 --epochs 5";

}  // namespace

TEST_CASE("simulate is deterministic") {
  Workdir w;
  auto a = run(w.path, std::string(kSmallSim) + " --output a.csv");
  auto b = run(w.path, std::string(kSmallSim) + " --output b.csv");
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  auto csv = read_file(w.file("a.csv"));
  CHECK(csv == read_file(w.file("b.csv")));
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "round,strategy,scheme,tokens_round,tokens_cumulative,precision,recall,f1,dev_f1,entities_selected");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 3);
}

TEST_CASE("missing required flag") {
  Workdir w;
  auto r = run(w.path, "transfer --source-embeddings s.vec --target-embeddings t.vec --corpus c.conll --output o.conll");
  CHECK(r.code == 2);
  CHECK(r.out.find("--lexicon") != std::string::npos);
  // One line on the terminal.
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 1);
}

TEST_CASE("runtime failures write the diagnostics log") {
  Workdir w;
  write_file(w.file("g.conll"), "a O\n");
  auto r = run(w.path, "evaluate --pred missing.conll --gold g.conll");
  CHECK(r.code == 1);
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 1);
  CHECK(r.out.find("missing.conll") != std::string::npos);
  CHECK(read_file(w.file("etal-diagnostics.log")).find("missing.conll") != std::string::npos);
}

TEST_CASE("evaluate") {
  Workdir w;
  write_file(w.file("gold.conll"), "EU B-ORG\nrejects O\nGerman B-MISC\n\nPeter B-PER\nBlackburn I-PER\n");
  write_file(w.file("none.conll"), "EU O\nrejects O\nGerman O\n\nPeter O\nBlackburn O\n");
  auto same = run(w.path, "evaluate --pred gold.conll --gold gold.conll --report r.json");
  REQUIRE(same.code == 0);
  CHECK(same.out.find("F1 1.0000") != std::string::npos);
  CHECK(nlohmann::json::parse(read_file(w.file("r.json")))["f1"] == 1.0);

  auto boot = run(w.path, "evaluate --pred gold.conll --pred none.conll --gold gold.conll --iterations 200 "
                          "--report b.json --scores s.csv");
  REQUIRE(boot.code == 0);
  auto j = nlohmann::json::parse(read_file(w.file("b.json")));
  CHECK(j["iterations"] == 200);
  CHECK(j["systems"][1]["significantly_worse"] == true);
  CHECK(fs::exists(w.file("s.csv")));
}

TEST_CASE("train then select") {
  Workdir w;
  SyntheticConfig sc;
  sc.pool_size = 120;
  sc.transferred_size = 150;
  sc.test_size = 1;
  sc.dev_size = 1;
  auto corpus = generate_synthetic(sc);
  write_file(w.file("train.conll"), write_conll(corpus.transferred, corpus.scheme));
  auto pool = corpus.pool;
  for (auto& s : pool) s.labels.clear();
  write_file(w.file("pool.jsonl"), write_jsonl(pool, corpus.scheme));

  auto t = run(w.path, "train --train train.conll --model m.bin --epochs 3 --hash-bits 14");
  REQUIRE(t.code == 0);
  CHECK(fs::exists(w.file("m.bin")));
  for (const char* strategy : {"etal", "sal", "rand", "cfeal"}) {
    auto s = run(w.path, std::string("select --model m.bin --pool pool.jsonl --budget 40 --strategy ") + strategy +
                             " --output batch.jsonl");
    REQUIRE(s.code == 0);
    std::istringstream in(read_file(w.file("batch.jsonl")));
    int tokens = 0;
    for (std::string line; std::getline(in, line);) {
      auto j = nlohmann::json::parse(line);
      tokens += j["end"].get<int>() - j["start"].get<int>();
    }
    if (std::string(strategy) != "cfeal") CHECK(tokens >= 40);
  }
}

TEST_CASE("transfer") {
  Workdir w;
  // Target space is the source space with the two axes swapped.
  write_file(w.file("src.vec"), "berlin 1 0\nparis 0 1\nstadt 0.7 0.7\n");
  write_file(w.file("tgt.vec"), "berlin 0 1\nparis 1 0\ncity 0.7 0.7\n");
  write_file(w.file("lex.tsv"), "berlin\tberlin\nparis\tparis\n");
  write_file(w.file("src.conll"), "stadt O\nberlin B-LOC\n");
  auto r = run(w.path, "transfer --source-embeddings src.vec --target-embeddings tgt.vec --lexicon lex.tsv "
                       "--corpus src.conll --output out.conll --no-normalize --csls-k 1");
  INFO(r.out);
  REQUIRE(r.code == 0);
  CHECK(read_file(w.file("out.conll")) == "city O\nberlin B-LOC\n");
}
