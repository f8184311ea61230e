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

#include "etal/eval.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "etal/errors.h"

namespace etal {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

nlohmann::json counts_json(const SpanCounts& c) {
  return {{"gold", c.gold}, {"predicted", c.predicted}, {"correct", c.correct},
          {"precision", c.precision()}, {"recall", c.recall()}, {"f1", c.f1()}};
}

}  // namespace

SpanCounts span_counts(std::span<const Label> predicted, std::span<const Label> gold, const LabelScheme& scheme) {
  if (predicted.size() != gold.size()) throw Error("predicted and gold lengths differ");
  auto p = extract_entities(predicted, scheme);
  auto g = extract_entities(gold, scheme);
  std::set<Entity> gs(g.begin(), g.end());
  SpanCounts c;
  c.gold = static_cast<long>(g.size());
  c.predicted = static_cast<long>(p.size());
  for (const auto& e : p) c.correct += gs.count(e);
  return c;
}

EvalReport span_f1(std::span<const LabeledSequence> predicted, std::span<const LabeledSequence> gold,
                   const LabelScheme& scheme) {
  if (predicted.size() != gold.size())
    throw Error("corpora are misaligned: " + std::to_string(predicted.size()) + " vs " +
                std::to_string(gold.size()) + " sequences");
  EvalReport r;
  for (const auto& type : scheme.entity_types()) r.per_type[type] = {};
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto& p = predicted[i];
    const auto& g = gold[i];
    if (p.labels.size() != g.labels.size() || g.labels.size() != g.tokens.size())
      throw Error("sequence " + std::to_string(i) + " ('" + g.id + "') is misaligned");
    auto pe = extract_entities(p.labels, scheme);
    auto ge = extract_entities(g.labels, scheme);
    std::set<Entity> gs(ge.begin(), ge.end());
    for (const auto& e : ge) ++r.per_type[scheme.entity_types()[e.type]].gold;
    for (const auto& e : pe) {
      auto& t = r.per_type[scheme.entity_types()[e.type]];
      ++t.predicted;
      if (gs.count(e)) ++t.correct;
    }
  }
  for (const auto& [name, c] : r.per_type) r.counts += c;
  r.precision = r.counts.precision();
  r.recall = r.counts.recall();
  r.f1 = r.counts.f1();
  return r;
}

BootstrapReport paired_bootstrap(std::span<const std::vector<LabeledSequence>> systems,
                                 std::span<const std::string> names, std::span<const LabeledSequence> gold,
                                 const LabelScheme& scheme, const BootstrapOptions& options) {
  if (systems.size() < 2) throw Error("paired bootstrap needs at least two systems");
  if (options.iterations < 100) throw Error("at least 100 bootstrap iterations are required");
  if (!(options.sample_fraction > 0.0 && options.sample_fraction <= 1.0))
    throw Error("sample fraction must be in (0, 1]");
  if (gold.empty()) throw Error("gold corpus is empty");
  if (options.reference < 0 || options.reference >= static_cast<int>(systems.size()))
    throw Error("reference system index out of range");
  const std::size_t n = gold.size(), k = systems.size();

  // Per-sequence counts so each iteration only sums.
  std::vector<std::vector<SpanCounts>> per_seq(k, std::vector<SpanCounts>(n));
  for (std::size_t s = 0; s < k; ++s) {
    if (systems[s].size() != n) throw Error("system " + std::to_string(s) + " is misaligned with gold");
    for (std::size_t i = 0; i < n; ++i) per_seq[s][i] = span_counts(systems[s][i].labels, gold[i].labels, scheme);
  }

  BootstrapReport rep;
  rep.iterations = options.iterations;
  rep.sample_fraction = options.sample_fraction;
  rep.seed = options.seed;
  rep.reference = options.reference;
  rep.scores.assign(options.iterations, std::vector<double>(k, 0.0));
  const auto draws = static_cast<std::size_t>(std::ceil(options.sample_fraction * static_cast<double>(n)));
  std::vector<std::size_t> sample(draws);
  for (int it = 0; it < options.iterations; ++it) {
    // Independent substream per iteration.
    std::mt19937_64 rng(splitmix64(options.seed ^ splitmix64(static_cast<std::uint64_t>(it))));
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (auto& idx : sample) idx = pick(rng);
    for (std::size_t s = 0; s < k; ++s) {
      SpanCounts c;
      for (std::size_t idx : sample) c += per_seq[s][idx];
      rep.scores[it][s] = c.f1();
    }
  }

  for (std::size_t s = 0; s < k; ++s) {
    BootstrapSystem sys;
    sys.name = s < names.size() ? names[s] : "system" + std::to_string(s);
    std::vector<double> col(options.iterations);
    double sum = 0.0;
    int wins = 0;
    for (int it = 0; it < options.iterations; ++it) {
      col[it] = rep.scores[it][s];
      sum += col[it];
      if (rep.scores[it][s] >= rep.scores[it][options.reference]) ++wins;
    }
    std::sort(col.begin(), col.end());
    sys.mean_f1 = sum / options.iterations;
    auto lo = static_cast<std::size_t>(std::floor(0.025 * options.iterations));
    auto hi = static_cast<std::size_t>(std::ceil(0.975 * options.iterations)) - 1;
    sys.lower = std::min(col[lo], sys.mean_f1);
    sys.upper = std::max(col[std::min(hi, col.size() - 1)], sys.mean_f1);
    sys.win_rate = static_cast<double>(wins) / options.iterations;
    sys.significantly_worse = static_cast<int>(s) != options.reference && sys.win_rate < 0.05;
    rep.systems.push_back(sys);
  }
  return rep;
}
std::string report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["precision"] = report.precision;
  j["recall"] = report.recall;
  j["f1"] = report.f1;
  j["counts"] = counts_json(report.counts);
  for (const auto& [name, c] : report.per_type) j["per_type"][name] = counts_json(c);
  return j.dump(2);
}

std::string report_to_json(const BootstrapReport& report) {
  nlohmann::json j;
  j["iterations"] = report.iterations;
  j["sample_fraction"] = report.sample_fraction;
  j["seed"] = report.seed;
  j["reference"] = report.systems.at(report.reference).name;
  for (const auto& s : report.systems)
    j["systems"].push_back({{"name", s.name},
                            {"mean_f1", s.mean_f1},
                            {"ci95", {s.lower, s.upper}},
                            {"win_rate_vs_reference", s.win_rate},
                            {"significantly_worse", s.significantly_worse}});
  return j.dump(2);
}

std::string bootstrap_scores_csv(const BootstrapReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "iteration";
  for (const auto& s : report.systems) out << ',' << s.name;
  out << '\n';
  for (std::size_t it = 0; it < report.scores.size(); ++it) {
    out << it;
    for (double v : report.scores[it]) out << ',' << v;
    out << '\n';
  }
  return out.str();
}

}  // namespace etal
