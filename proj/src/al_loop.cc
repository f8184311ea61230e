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

#include "etal/al_loop.h"

#include <algorithm>
#include <cctype>
#include <cstdio>

#include "etal/errors.h"

namespace etal {

namespace {

std::string describe(const LabeledSequence& seq, int start, int end, int type, const LabelScheme& scheme) {
  return seq.id + "[" + std::to_string(start) + "," + std::to_string(end) + ") " +
         (type < 0 ? std::string("O") : scheme.entity_types()[type]);
}

// The annotation recorded on t, for error messages.
std::string existing_at(const PartialLabeling& pl, const LabeledSequence& seq, int t, const LabelScheme& scheme) {
  const auto& prov = pl.provenance();
  for (auto it = prov.rbegin(); it != prov.rend(); ++it)
    if (it->start <= t && t < it->end) return describe(seq, it->start, it->end, it->type, scheme);
  return seq.id + "[" + std::to_string(t) + "]";
}

// Splits a region into entity spans and maximal O spans, in order.
std::vector<AnnotatedSpan> decompose(const Answer& a) {
  std::vector<AnnotatedSpan> out;
  int pos = a.start;
  for (const Entity& e : a.entities) {
    if (e.start > pos) out.push_back({pos, e.start, -1});
    out.push_back({e.start, e.end, e.type});
    pos = e.end;
  }
  if (pos < a.end) out.push_back({pos, a.end, -1});
  return out;
}

}  // namespace

ApplyResult apply_annotations(AcquiredData& data, const SequencePool& pool, const SelectionBatch& batch,
                              std::span<const Answer> answers, const LabelScheme& scheme) {
  std::map<int, PartialLabeling> staged;
  auto labeling = [&](int seq) -> PartialLabeling& {
    auto it = staged.find(seq);
    if (it != staged.end()) return it->second;
    auto old = data.labels.find(seq);
    PartialLabeling pl = old != data.labels.end() ? old->second
                                                   : PartialLabeling(pool.sequence(seq).size(), scheme.size());
    return staged.emplace(seq, std::move(pl)).first->second;
  };

  ApplyResult result;
  std::vector<std::pair<int, const Answer*>> applied;
  for (const Answer& a : answers) {
    if (a.item < 0 || a.item >= static_cast<int>(batch.items.size()))
      throw Error("answer refers to item " + std::to_string(a.item) + " outside the batch");
    if (a.skipped) continue;
    const SelectionItem& item = batch.items[a.item];
    const LabeledSequence& seq = pool.sequence(item.seq_index);
    if (a.start < 0 || a.end > seq.size() || a.start >= a.end)
      throw Error("answer region [" + std::to_string(a.start) + "," + std::to_string(a.end) +
                  ") is outside sequence " + seq.id + " of length " + std::to_string(seq.size()));
    int pos = a.start;
    for (const Entity& e : a.entities) {
      if (e.start < pos || e.end > a.end || e.start >= e.end || e.type < 0 || e.type >= scheme.num_types())
        throw Error("answer entity [" + std::to_string(e.start) + "," + std::to_string(e.end) +
                    ") does not fit region of " + seq.id);
      pos = e.end;
    }

    PartialLabeling& pl = labeling(item.seq_index);
    auto region = entities_to_labels(seq.size(), a.entities, scheme);
    for (int t = a.start; t < a.end; ++t) {
      if (!pl.allows(t, region[t])) {
        int type = -1;
        for (const Entity& e : a.entities)
          if (e.start <= t && t < e.end) type = e.type;
        throw ConflictError("annotation " + describe(seq, a.start, a.end, type, scheme) +
                            " conflicts with existing annotation " + existing_at(pl, seq, t, scheme));
      }
    }
    for (const AnnotatedSpan& span : decompose(a)) pl.annotate(span, scheme);
    applied.emplace_back(item.seq_index, &a);
    result.tokens += a.length();
    result.entities += static_cast<int>(a.entities.size());
    ++result.answers;
  }

  for (auto& [seq, pl] : staged) data.labels[seq] = std::move(pl);
  for (const auto& [seq, a] : applied) data.coverage.mark(seq, a->start, a->end);
  data.tokens += result.tokens;
  return result;
}

std::vector<Answer> oracle_answer(const SelectionBatch& batch, std::span<const LabeledSequence> gold,
                                  const LabelScheme& scheme) {
  std::vector<Answer> out;
  for (int i = 0; i < static_cast<int>(batch.items.size()); ++i) {
    const SelectionItem& item = batch.items[i];
    const LabeledSequence* seq = nullptr;
    if (item.seq_index < static_cast<int>(gold.size()) && gold[item.seq_index].id == item.seq_id) {
      seq = &gold[item.seq_index];
    } else {
      for (const auto& g : gold)
        if (g.id == item.seq_id) seq = &g;
    }
    if (!seq || !seq->labeled()) throw Error("no gold labels for sequence " + item.seq_id);
    auto entities = extract_entities(seq->labels, scheme);
    Answer a{i, item.start, item.end, {}, false};
    for (bool grew = true; grew;) {
      grew = false;
      for (const Entity& e : entities) {
        bool overlaps = e.start < a.end && a.start < e.end;
        if (overlaps && (e.start < a.start || e.end > a.end)) {
          a.start = std::min(a.start, e.start);
          a.end = std::max(a.end, e.end);
          grew = true;
        }
      }
    }
    for (const Entity& e : entities)
      if (e.start >= a.start && e.end <= a.end) a.entities.push_back(e);
    out.push_back(std::move(a));
  }
  return out;
}

int count_oracle_entities(std::span<const Answer> answers) {
  int n = 0;
  for (const auto& a : answers)
    if (!a.skipped) n += static_cast<int>(a.entities.size());
  return n;
}

std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::kFineTune: return "FineTune";
    case Scheme::kCorpusAug: return "CorpusAug";
    case Scheme::kCorpusAugFineTune: return "CorpusAug+FineTune";
  }
  return "?";
}

Scheme parse_scheme(std::string_view name) {
  std::string u;
  for (char c : name)
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '+')
      u += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (u == "finetune") return Scheme::kFineTune;
  if (u == "corpusaug") return Scheme::kCorpusAug;
  if (u == "corpusaug+finetune") return Scheme::kCorpusAugFineTune;
  throw Error("unknown training scheme '" + std::string(name) + "'");
}

std::vector<TrainingExample> make_examples(const CrfModel& model, std::span<const LabeledSequence> labeled) {
  std::vector<TrainingExample> out;
  out.reserve(labeled.size());
  for (const auto& s : labeled) {
    if (!s.labeled()) throw Error("sequence " + s.id + " has no labels");
    out.push_back({model.extract(s), s.labels});
  }
  return out;
}

std::vector<TrainingExample> make_examples(const SequencePool& pool, const AcquiredData& data) {
  std::vector<TrainingExample> out;
  out.reserve(data.labels.size());
  for (const auto& [k, pl] : data.labels) {
    if (pl.fully_constrained()) {
      std::vector<Label> y(pl.length());
      for (int t = 0; t < pl.length(); ++t) y[t] = pl.pinned(t);
      if (std::find(y.begin(), y.end(), -1) == y.end()) {
        out.push_back({pool.features(k), std::move(y)});
        continue;
      }
    }
    out.push_back({pool.features(k), pl});
  }
  return out;
}

TrainingSetup prepare_training(const CrfModel& blank, std::span<const LabeledSequence> transferred,
                               const SchemeConfig& config, std::uint64_t seed) {
  TrainingSetup setup{blank, blank, make_examples(blank, transferred)};
  if (!setup.transferred.empty())
    setup.initial = train(blank, setup.transferred, {config.learning_rate, config.epochs, seed}).model;
  return setup;
}

CrfModel retrain(const TrainingSetup& setup, std::span<const TrainingExample> acquired, int round,
                 const SchemeConfig& config, std::uint64_t seed) {
  double tune_rate = round <= 1 ? config.first_round_learning_rate : config.learning_rate;
  if (config.scheme != Scheme::kCorpusAug && setup.transferred.empty())
    throw Error(scheme_name(config.scheme) + " needs transferred data");

  if (config.scheme == Scheme::kFineTune) {
    if (acquired.empty()) return setup.initial;
    return train(setup.initial, acquired, {tune_rate, config.epochs, seed}).model;
  }

  std::vector<TrainingExample> all(setup.transferred.begin(), setup.transferred.end());
  all.insert(all.end(), acquired.begin(), acquired.end());
  if (all.empty()) throw Error("no training data");
  CrfModel model = train(setup.blank, all, {config.learning_rate, config.epochs, seed}).model;
  if (config.scheme == Scheme::kCorpusAugFineTune && !acquired.empty())
    model = train(std::move(model), acquired, {tune_rate, config.epochs, mix_seed(seed)}).model;
  return model;
}

std::vector<LabeledSequence> predict(const CrfModel& model, std::span<const LabeledSequence> seqs) {
  std::vector<LabeledSequence> out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) {
    LabeledSequence p{s.id, s.tokens, viterbi(score_potentials(model, s)).labels};
    out.push_back(std::move(p));
  }
  return out;
}

SelectionBatch select_batch(Strategy strategy, const SequencePool& pool, const CrfModel& model, int budget,
                            const SelectionConfig& config, const Coverage& annotated, std::uint64_t seed) {
  switch (strategy) {
    case Strategy::kEtal: return select_etal(pool, model, budget, config, annotated);
    case Strategy::kSal: return select_sal(pool, model, budget, annotated);
    case Strategy::kCfeal: return select_cfeal(pool, model, budget, annotated);
    case Strategy::kRand: return select_rand(pool, seed, budget, config.max_span_length, annotated);
  }
  throw Error("unknown strategy");
}

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

namespace {

EvalReport evaluate_on(const CrfModel& model, std::span<const LabeledSequence> split) {
  if (split.empty()) return {};
  auto pred = predict(model, split);
  return span_f1(pred, split, model.scheme());
}

}  // namespace

SimulationResult run_simulation(const SimulationData& data, const SimulationConfig& config) {
  CrfModel blank(data.scheme, data.features, data.embeddings);
  return run_simulation(data, config, prepare_training(blank, data.transferred, config.scheme, mix_seed(config.seed)));
}

SimulationResult run_simulation(const SimulationData& data, const SimulationConfig& config,
                                const TrainingSetup& setup) {
  if (config.rounds < 0) throw Error("round count must be non-negative");
  SimulationResult result;
  SequencePool pool(data.pool, setup.blank);
  AcquiredData acquired(pool);
  CrfModel model = setup.initial;

  RoundRecord base;
  base.strategy = config.strategy;
  base.scheme = config.scheme.scheme;
  base.dev = evaluate_on(model, data.dev);
  base.test = evaluate_on(model, data.test);
  result.records.push_back(base);

  for (int r = 1; r <= config.rounds; ++r) {
    std::uint64_t round_seed = mix_seed(config.seed ^ mix_seed(static_cast<std::uint64_t>(r)));
    SelectionBatch batch =
        select_batch(config.strategy, pool, model, config.budget, config.selection, acquired.coverage, round_seed);
    for (const auto& w : batch.warnings) result.warnings.push_back("round " + std::to_string(r) + ": " + w);
    if (batch.items.empty()) {
      result.warnings.push_back("round " + std::to_string(r) + ": nothing left to select, stopping early");
      break;
    }
    auto answers = oracle_answer(batch, data.pool, data.scheme);
    ApplyResult applied = apply_annotations(acquired, pool, batch, answers, data.scheme);
    auto examples = make_examples(pool, acquired);
    model = retrain(setup, examples, r, config.scheme, mix_seed(round_seed));

    RoundRecord rec;
    rec.round = r;
    rec.strategy = config.strategy;
    rec.scheme = config.scheme.scheme;
    rec.batch = batch.items;
    rec.answers_applied = applied.answers;
    rec.tokens_round = applied.tokens;
    rec.tokens_cumulative = acquired.tokens;
    rec.entities_selected = count_oracle_entities(answers);
    rec.dev = evaluate_on(model, data.dev);
    rec.test = evaluate_on(model, data.test);
    result.records.push_back(std::move(rec));
  }
  return result;
}

std::string trajectory_csv(std::span<const RoundRecord> records) {
  std::string out = "round,strategy,scheme,tokens_round,tokens_cumulative,precision,recall,f1,dev_f1,entities_selected\n";
  char buf[256];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%d,%s,%s,%d,%ld,%.6f,%.6f,%.6f,%.6f,%d\n", r.round,
                  strategy_name(r.strategy).c_str(), scheme_name(r.scheme).c_str(), r.tokens_round,
                  r.tokens_cumulative, r.test.precision, r.test.recall, r.test.f1, r.dev.f1, r.entities_selected);
    out += buf;
  }
  return out;
}

}  // namespace etal
