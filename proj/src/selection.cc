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

#include "etal/selection.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

#include "etal/errors.h"

namespace etal {

namespace {

// Appends items while the budget is not yet reached; the item that crosses it is kept.
struct BudgetFiller {
  SelectionBatch& batch;
  int budget;

  bool full() const { return batch.token_cost >= budget; }
  void add(SelectionItem item) {
    batch.token_cost += item.length();
    batch.items.push_back(std::move(item));
  }
};

SelectionItem make_item(const SequencePool& pool, int seq, int start, int end, double score) {
  const auto& s = pool.sequence(seq);
  return {seq, s.id, start, end, join_tokens(s.tokens, start, end), score};
}

}  // namespace

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kEtal: return "ETAL";
    case Strategy::kSal: return "SAL";
    case Strategy::kCfeal: return "CFEAL";
    case Strategy::kRand: return "RAND";
  }
  return "?";
}

Strategy parse_strategy(std::string_view name) {
  std::string u(name);
  for (char& c : u) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (u == "ETAL") return Strategy::kEtal;
  if (u == "SAL") return Strategy::kSal;
  if (u == "CFEAL") return Strategy::kCfeal;
  if (u == "RAND") return Strategy::kRand;
  throw Error("unknown strategy '" + std::string(name) + "'");
}

SequencePool::SequencePool(std::vector<LabeledSequence> sequences, const CrfModel& model)
    : sequences_(std::move(sequences)) {
  features_.reserve(sequences_.size());
  for (const auto& s : sequences_) features_.push_back(model.extract(s));
}

int SequencePool::total_tokens() const {
  int n = 0;
  for (const auto& s : sequences_) n += s.size();
  return n;
}

int SequencePool::index_of(std::string_view id) const {
  for (int i = 0; i < size(); ++i)
    if (sequences_[i].id == id) return i;
  return -1;
}

Coverage::Coverage(const SequencePool& pool) {
  marks_.reserve(pool.size());
  for (int i = 0; i < pool.size(); ++i) marks_.emplace_back(pool.sequence(i).size(), 0);
}

bool Coverage::overlaps(int seq, int start, int end) const {
  for (int t = start; t < end; ++t)
    if (marks_[seq][t]) return true;
  return false;
}

bool Coverage::any(int seq) const {
  return std::any_of(marks_[seq].begin(), marks_[seq].end(), [](std::uint8_t m) { return m != 0; });
}

void Coverage::mark(int seq, int start, int end) {
  for (int t = start; t < end; ++t) marks_[seq][t] = 1;
}

int Coverage::remaining_tokens() const {
  int n = 0;
  for (const auto& m : marks_) n += static_cast<int>(std::count(m.begin(), m.end(), 0));
  return n;
}

double binary_entropy(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error("probability out of range: " + std::to_string(p));
  double h = 0.0;
  if (p > 0.0) h -= p * std::log(p);
  if (p < 1.0) h -= (1.0 - p) * std::log1p(-p);
  return h;
}

std::vector<SpanCandidate> span_entropy_scan(const Marginals& marginals, const LabelScheme& scheme,
                                             int max_len, double threshold) {
  const int T = marginals.length;
  std::vector<double> begin_mass(T, 0.0), inside_mass(T, 0.0), outside_mass(T + 1, 1.0);
  for (int t = 0; t < T; ++t) {
    for (Label y : scheme.begin_labels()) begin_mass[t] += marginals.at(t, y);
    for (Label y : scheme.inside_labels()) inside_mass[t] += marginals.at(t, y);
    outside_mass[t] = marginals.at(t, LabelScheme::kOutside);
  }
  std::vector<SpanCandidate> out;
  for (int i = 0; i < T; ++i) {
    double p_span = begin_mass[i];
    for (int j = i + 1; j <= T && j - i <= max_len; ++j) {
      double p_entity = std::clamp(p_span * outside_mass[j], 0.0, 1.0);
      double h = binary_entropy(p_entity);
      if (h > threshold) out.push_back({0, i, j, p_entity, h});
      if (j < T) p_span *= inside_mass[j];
    }
  }
  return out;
}

std::map<std::vector<std::string>, SurfaceAggregate> aggregate_entropy(
    std::span<const std::vector<SpanCandidate>> scans, std::span<const LabeledSequence> sequences) {
  std::map<std::vector<std::string>, SurfaceAggregate> out;
  for (std::size_t k = 0; k < scans.size(); ++k) {
    for (const auto& c : scans[k]) {
      const auto& toks = sequences[c.seq_index].tokens;
      std::vector<std::string> key(toks.begin() + c.start, toks.begin() + c.end);
      auto& agg = out[key];
      if (agg.tokens.empty()) agg.tokens = key;
      agg.h_aggregate += c.entropy;
      agg.occurrences.push_back(c);
    }
  }
  return out;
}

SelectionBatch select_etal(const SequencePool& pool, const CrfModel& model, int budget_tokens,
                           const SelectionConfig& config, const Coverage& annotated) {
  if (budget_tokens < 1) throw Error("budget must be at least 1 token");
  SelectionBatch batch{Strategy::kEtal, {}, 0, {}};
  std::vector<std::vector<SpanCandidate>> scans(pool.size());
  for (int k = 0; k < pool.size(); ++k) {
    Marginals m = forward_backward(score_potentials(model, pool.features(k)));
    auto cands = span_entropy_scan(m, model.scheme(), config.max_span_length, config.entropy_threshold);
    for (auto& c : cands) {
      if (annotated.overlaps(k, c.start, c.end)) continue;
      c.seq_index = k;
      scans[k].push_back(c);
    }
  }
  auto surfaces = aggregate_entropy(scans, pool.sequences());
  if (surfaces.empty()) {
    batch.warnings.push_back("no candidate spans above the entropy threshold");
    return batch;
  }
  std::vector<const SurfaceAggregate*> ranked;
  ranked.reserve(surfaces.size());
  for (const auto& [key, agg] : surfaces) ranked.push_back(&agg);
  // Map order already sorts ties lexicographically by token sequence.
  std::stable_sort(ranked.begin(), ranked.end(), [](const SurfaceAggregate* a, const SurfaceAggregate* b) {
    if (a->h_aggregate != b->h_aggregate) return a->h_aggregate > b->h_aggregate;
    return a->occurrences.size() > b->occurrences.size();
  });

  Coverage taken = annotated;
  BudgetFiller fill{batch, budget_tokens};
  for (const auto* agg : ranked) {
    for (const auto& occ : agg->occurrences) {
      if (taken.overlaps(occ.seq_index, occ.start, occ.end)) continue;
      taken.mark(occ.seq_index, occ.start, occ.end);
      fill.add(make_item(pool, occ.seq_index, occ.start, occ.end, agg->h_aggregate));
      if (fill.full()) return batch;
    }
  }
  return batch;
}

SelectionBatch select_sal(const SequencePool& pool, const CrfModel& model, int budget_tokens,
                          const Coverage& annotated) {
  if (budget_tokens < 1) throw Error("budget must be at least 1 token");
  SelectionBatch batch{Strategy::kSal, {}, 0, {}};
  std::vector<std::pair<double, int>> ranked;
  for (int k = 0; k < pool.size(); ++k) {
    if (annotated.any(k)) continue;
    PotentialTable pot = score_potentials(model, pool.features(k));
    double conf = std::exp(viterbi(pot).score - log_partition(pot));
    ranked.emplace_back(conf, k);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  BudgetFiller fill{batch, budget_tokens};
  for (const auto& [conf, k] : ranked) {
    if (fill.full()) break;
    fill.add(make_item(pool, k, 0, pool.sequence(k).size(), conf));
  }
  if (ranked.empty()) batch.warnings.push_back("no unannotated sequences left");
  return batch;
}

double segment_confidence(const PotentialTable& pot, const Entity& segment, const LabelScheme& scheme) {
  PartialLabeling pin(pot.length(), pot.num_labels());
  pin.annotate({segment.start, segment.end, segment.type}, scheme);
  return std::exp(log_partition(pot, pin) - log_partition(pot));
}

SelectionBatch select_cfeal(const SequencePool& pool, const CrfModel& model, int budget_tokens,
                            const Coverage& annotated) {
  if (budget_tokens < 1) throw Error("budget must be at least 1 token");
  SelectionBatch batch{Strategy::kCfeal, {}, 0, {}};
  struct Segment {
    double confidence;
    int seq;
    Entity entity;
  };
  std::vector<Segment> segments;
  for (int k = 0; k < pool.size(); ++k) {
    PotentialTable pot = score_potentials(model, pool.features(k));
    auto best = viterbi(pot);
    for (const Entity& e : extract_entities(best.labels, model.scheme())) {
      if (annotated.overlaps(k, e.start, e.end)) continue;
      segments.push_back({segment_confidence(pot, e, model.scheme()), k, e});
    }
  }
  if (segments.empty()) {
    batch.warnings.push_back("model predicts no entities in the unannotated pool");
    return batch;
  }
  std::stable_sort(segments.begin(), segments.end(),
                   [](const Segment& a, const Segment& b) { return a.confidence < b.confidence; });
  BudgetFiller fill{batch, budget_tokens};
  for (const auto& s : segments) {
    if (fill.full()) break;
    fill.add(make_item(pool, s.seq, s.entity.start, s.entity.end, s.confidence));
  }
  return batch;
}

SelectionBatch select_rand(const SequencePool& pool, std::uint64_t seed, int budget_tokens, int max_len,
                           const Coverage& annotated) {
  if (budget_tokens < 1) throw Error("budget must be at least 1 token");
  SelectionBatch batch{Strategy::kRand, {}, 0, {}};
  struct Slot {
    int seq, start, len;
  };
  std::vector<Slot> slots;
  for (int k = 0; k < pool.size(); ++k)
    for (int i = 0; i < pool.sequence(k).size(); ++i)
      for (int len = 1; len <= max_len && i + len <= pool.sequence(k).size(); ++len)
        if (!annotated.overlaps(k, i, i + len)) slots.push_back({k, i, len});

  // Slots that become invalid stay invalid, so discarding them on sight keeps
  // each draw uniform over the still-valid slots.
  std::mt19937_64 rng(seed);
  Coverage taken = annotated;
  BudgetFiller fill{batch, budget_tokens};
  while (!fill.full() && !slots.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, slots.size() - 1);
    std::size_t i = pick(rng);
    Slot s = slots[i];
    slots[i] = slots.back();
    slots.pop_back();
    if (taken.overlaps(s.seq, s.start, s.start + s.len)) continue;
    taken.mark(s.seq, s.start, s.start + s.len);
    fill.add(make_item(pool, s.seq, s.start, s.start + s.len, 0.0));
  }
  if (!fill.full()) batch.warnings.push_back("pool exhausted before the budget was reached");
  return batch;
}

std::string batch_to_jsonl(const SelectionBatch& batch) {
  std::string out;
  for (const auto& item : batch.items) {
    nlohmann::json j = {{"seq_id", item.seq_id}, {"start", item.start}, {"end", item.end},
                        {"surface", item.surface}, {"score", item.score},
                        {"strategy", strategy_name(batch.strategy)}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace etal
