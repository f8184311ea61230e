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
#include <span>
#include <string>
#include <vector>

#include "etal/corpus.h"
#include "etal/crf.h"
#include "etal/model.h"

namespace etal {

enum class Strategy { kEtal, kSal, kCfeal, kRand };

std::string strategy_name(Strategy s);
// Case-insensitive; throws on unknown names.
Strategy parse_strategy(std::string_view name);

// Unlabeled sequences with their features extracted once.
class SequencePool {
 public:
  SequencePool() = default;
  SequencePool(std::vector<LabeledSequence> sequences, const CrfModel& model);

  int size() const { return static_cast<int>(sequences_.size()); }
  const LabeledSequence& sequence(int i) const { return sequences_[i]; }
  const SequenceFeatures& features(int i) const { return features_[i]; }
  const std::vector<LabeledSequence>& sequences() const { return sequences_; }
  int total_tokens() const;
  // -1 when absent.
  int index_of(std::string_view id) const;

 private:
  std::vector<LabeledSequence> sequences_;
  std::vector<SequenceFeatures> features_;
};

// Token positions already annotated, per pool sequence.
class Coverage {
 public:
  Coverage() = default;
  explicit Coverage(const SequencePool& pool);

  bool covered(int seq, int t) const { return marks_[seq][t] != 0; }
  bool overlaps(int seq, int start, int end) const;
  bool any(int seq) const;
  void mark(int seq, int start, int end);
  int remaining_tokens() const;

 private:
  std::vector<std::vector<std::uint8_t>> marks_;
};

struct SpanCandidate {
  int seq_index = 0;
  int start = 0;
  int end = 0;
  double p_entity = 0.0;
  double entropy = 0.0;
};

struct SelectionItem {
  int seq_index = 0;
  std::string seq_id;
  int start = 0;
  int end = 0;
  std::string surface;
  double score = 0.0;

  int length() const { return end - start; }
  friend bool operator==(const SelectionItem&, const SelectionItem&) = default;
};

struct SelectionBatch {
  Strategy strategy = Strategy::kEtal;
  std::vector<SelectionItem> items;
  int token_cost = 0;
  std::vector<std::string> warnings;

  friend bool operator==(const SelectionBatch&, const SelectionBatch&) = default;
};

struct SelectionConfig {
  int max_span_length = 5;
  double entropy_threshold = 1e-8;

  friend bool operator==(const SelectionConfig&, const SelectionConfig&) = default;
};

// Natural-log entropy of a two-outcome variable; 0 ln 0 = 0.
double binary_entropy(double p);

// Every span [i, j) with j - i <= max_len and entropy(p_entity) > threshold.
// p_entity = (B mass at i) * prod_{i<t<j} (I mass at t) * p(O at j), where
// p(O) past the last token is 1. seq_index of the results is left at 0.
std::vector<SpanCandidate> span_entropy_scan(const Marginals& marginals, const LabelScheme& scheme,
                                             int max_len, double threshold);

struct SurfaceAggregate {
  std::vector<std::string> tokens;
  double h_aggregate = 0.0;
  std::vector<SpanCandidate> occurrences;

  std::string surface() const { return join_tokens(tokens, 0, static_cast<int>(tokens.size())); }
};

// Groups candidates by exact token sequence and sums their entropies.
// scans[k] holds the candidates of pool sequence k.
std::map<std::vector<std::string>, SurfaceAggregate> aggregate_entropy(
    std::span<const std::vector<SpanCandidate>> scans, std::span<const LabeledSequence> sequences);

SelectionBatch select_etal(const SequencePool& pool, const CrfModel& model, int budget_tokens,
                           const SelectionConfig& config, const Coverage& annotated);
SelectionBatch select_sal(const SequencePool& pool, const CrfModel& model, int budget_tokens,
                          const Coverage& annotated);
SelectionBatch select_cfeal(const SequencePool& pool, const CrfModel& model, int budget_tokens,
                            const Coverage& annotated);
SelectionBatch select_rand(const SequencePool& pool, std::uint64_t seed, int budget_tokens, int max_len,
                           const Coverage& annotated);

// Probability that the labels of `segment` are exactly B-X I-X ... under pot.
double segment_confidence(const PotentialTable& pot, const Entity& segment, const LabelScheme& scheme);

// JSONL rows {seq_id, start, end, surface, score, strategy}.
std::string batch_to_jsonl(const SelectionBatch& batch);

}  // namespace etal
