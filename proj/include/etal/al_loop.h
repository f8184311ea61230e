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

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "etal/corpus.h"
#include "etal/crf.h"
#include "etal/eval.h"
#include "etal/model.h"
#include "etal/selection.h"
#include "etal/training.h"

namespace etal {

// Annotator response to one batch item. [start, end) is the region actually
// read, which differs from the item span after a boundary adjustment or
// oracle snapping. entities lie inside the region; everything else in the
// region is O. An empty entity list over a span item means not-an-entity.
struct Answer {
  int item = 0;
  int start = 0;
  int end = 0;
  std::vector<Entity> entities;
  bool skipped = false;

  int length() const { return end - start; }
  friend bool operator==(const Answer&, const Answer&) = default;
};

// Per-sequence constraints gathered so far, keyed by pool index.
struct AcquiredData {
  std::map<int, PartialLabeling> labels;
  Coverage coverage;
  long tokens = 0;

  AcquiredData() = default;
  explicit AcquiredData(const SequencePool& pool) : coverage(pool) {}
};

struct ApplyResult {
  int tokens = 0;
  int answers = 0;
  int entities = 0;
};

// Adds the constraints of every non-skipped answer. Checks all answers
// before changing anything, so a failing call leaves `data` untouched.
// Throws ConflictError when an answer contradicts an earlier constraint and
// Error for answers outside the sequence or not matching the batch.
ApplyResult apply_annotations(AcquiredData& data, const SequencePool& pool, const SelectionBatch& batch,
                              std::span<const Answer> answers, const LabelScheme& scheme);

// Gold answers. Span items that cut through a gold entity are widened until
// no gold entity crosses the region boundary; SAL items get the whole sequence.
std::vector<Answer> oracle_answer(const SelectionBatch& batch, std::span<const LabeledSequence> gold,
                                  const LabelScheme& scheme);

// Gold entities fully inside each answered region, summed over the batch.
int count_oracle_entities(std::span<const Answer> answers);

enum class Scheme { kFineTune, kCorpusAug, kCorpusAugFineTune };

std::string scheme_name(Scheme s);
Scheme parse_scheme(std::string_view name);

struct SchemeConfig {
  Scheme scheme = Scheme::kFineTune;
  double learning_rate = 0.015;
  // Fine-tuning rate of the first round; later rounds use learning_rate.
  double first_round_learning_rate = 1e-5;
  int epochs = 30;

  friend bool operator==(const SchemeConfig&, const SchemeConfig&) = default;
};

struct TrainingSetup {
  // Model trained on the transferred data, or the blank model when there is none.
  CrfModel initial;
  // Untrained model with the same templates.
  CrfModel blank;
  std::vector<TrainingExample> transferred;
};

std::vector<TrainingExample> make_examples(const CrfModel& model, std::span<const LabeledSequence> labeled);
// Fully pinned sequences become plain label targets.
std::vector<TrainingExample> make_examples(const SequencePool& pool, const AcquiredData& data);

TrainingSetup prepare_training(const CrfModel& blank, std::span<const LabeledSequence> transferred,
                               const SchemeConfig& config, std::uint64_t seed);

// round is 1-based and only selects the fine-tuning learning rate.
CrfModel retrain(const TrainingSetup& setup, std::span<const TrainingExample> acquired, int round,
                 const SchemeConfig& config, std::uint64_t seed);

std::vector<LabeledSequence> predict(const CrfModel& model, std::span<const LabeledSequence> seqs);

struct RoundRecord {
  int round = 0;
  Strategy strategy = Strategy::kEtal;
  Scheme scheme = Scheme::kFineTune;
  std::vector<SelectionItem> batch;
  int answers_applied = 0;
  int tokens_round = 0;
  long tokens_cumulative = 0;
  int entities_selected = 0;
  EvalReport dev;
  EvalReport test;
};

struct SimulationData {
  LabelScheme scheme;
  // Gold-labeled; labels are only read by the oracle.
  std::vector<LabeledSequence> pool;
  std::vector<LabeledSequence> dev;
  std::vector<LabeledSequence> test;
  std::vector<LabeledSequence> transferred;
  FeatureConfig features;
  std::shared_ptr<const EmbeddingTable> embeddings;
};

struct SimulationConfig {
  Strategy strategy = Strategy::kEtal;
  SchemeConfig scheme;
  int budget = 200;
  int rounds = 20;
  std::uint64_t seed = 1;
  SelectionConfig selection;
};

struct SimulationResult {
  std::vector<RoundRecord> records;
  std::vector<std::string> warnings;
};

// Record 0 is the transferred-data model before any annotation.
SimulationResult run_simulation(const SimulationData& data, const SimulationConfig& config);
// Same, reusing an already prepared setup (it must match data and config).
SimulationResult run_simulation(const SimulationData& data, const SimulationConfig& config,
                                const TrainingSetup& setup);

// Columns: round,strategy,scheme,tokens_round,tokens_cumulative,precision,recall,f1,dev_f1,entities_selected.
// precision/recall/f1 are on the test split.
std::string trajectory_csv(std::span<const RoundRecord> records);

SelectionBatch select_batch(Strategy strategy, const SequencePool& pool, const CrfModel& model, int budget,
                            const SelectionConfig& config, const Coverage& annotated, std::uint64_t seed);

// splitmix64 finalizer; used to derive independent seeds from one root seed.
std::uint64_t mix_seed(std::uint64_t x);

}  // namespace etal
