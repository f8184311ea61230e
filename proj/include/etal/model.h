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
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "etal/corpus.h"
#include "etal/crf.h"
#include "etal/embeddings.h"
#include "etal/label_scheme.h"

namespace etal {

// Emission feature templates. Every feature is hashed together with the
// candidate label into a 2^hash_bits weight space.
struct FeatureConfig {
  int hash_bits = 20;
  bool word = true;
  bool lowercase = true;
  // Prefixes and suffixes of length 1..affix_length.
  int affix_length = 3;
  bool shape = true;
  // Lowercased previous and next word.
  bool context = true;
  bool in_embeddings = true;
  // Leading embedding components used as real-valued features.
  int embedding_components = 0;

  friend bool operator==(const FeatureConfig&, const FeatureConfig&) = default;
};

struct FeatureValue {
  std::uint64_t hash = 0;
  double value = 1.0;

  friend bool operator==(const FeatureValue&, const FeatureValue&) = default;
};

// Label-independent features of each position, extracted once per sequence.
class SequenceFeatures {
 public:
  int length() const { return static_cast<int>(offsets_.size()) - 1; }
  std::span<const FeatureValue> at(int t) const {
    return std::span<const FeatureValue>(values_).subspan(offsets_[t], offsets_[t + 1] - offsets_[t]);
  }

  void add(std::uint64_t hash, double value) { values_.push_back({hash, value}); }
  void end_position() { offsets_.push_back(values_.size()); }

  friend bool operator==(const SequenceFeatures&, const SequenceFeatures&) = default;

 private:
  std::vector<std::size_t> offsets_{0};
  std::vector<FeatureValue> values_;
};

std::uint64_t hash_feature(std::string_view name);
// Word shape: runs of X/x/d/other collapsed, e.g. "Smith-2" -> "Xx-d".
std::string word_shape(std::string_view word);

class CrfModel {
 public:
  CrfModel() = default;
  CrfModel(LabelScheme scheme, FeatureConfig config = {},
           std::shared_ptr<const EmbeddingTable> embeddings = nullptr);

  const LabelScheme& scheme() const { return scheme_; }
  const FeatureConfig& config() const { return config_; }
  int num_labels() const { return scheme_.size(); }
  std::size_t feature_space() const { return weights_.size(); }

  std::vector<double>& weights() { return weights_; }
  const std::vector<double>& weights() const { return weights_; }
  // L x L, row = previous label.
  std::vector<double>& transitions() { return transitions_; }
  const std::vector<double>& transitions() const { return transitions_; }
  double transition(Label from, Label to) const { return transitions_[from * num_labels() + to]; }

  // BIO2-invalid transitions (and I-X at position 0) get -inf potential.
  bool mask_invalid_transitions() const { return mask_invalid_; }
  void set_mask_invalid_transitions(bool on) { mask_invalid_ = on; }

  const std::shared_ptr<const EmbeddingTable>& embeddings() const { return embeddings_; }
  void set_embeddings(std::shared_ptr<const EmbeddingTable> table) { embeddings_ = std::move(table); }

  std::size_t weight_index(std::uint64_t feature_hash, Label y) const;

  SequenceFeatures extract(std::span<const std::string> tokens) const;
  SequenceFeatures extract(const LabeledSequence& seq) const { return extract(seq.tokens); }

  friend bool operator==(const CrfModel& a, const CrfModel& b) {
    return a.scheme_ == b.scheme_ && a.config_ == b.config_ && a.weights_ == b.weights_ &&
           a.transitions_ == b.transitions_ && a.mask_invalid_ == b.mask_invalid_;
  }

 private:
  LabelScheme scheme_;
  FeatureConfig config_;
  std::vector<double> weights_;
  std::vector<double> transitions_;
  bool mask_invalid_ = false;
  std::shared_ptr<const EmbeddingTable> embeddings_;
};

PotentialTable score_potentials(const CrfModel& model, const SequenceFeatures& features);
PotentialTable score_potentials(const CrfModel& model, const LabeledSequence& seq);

// Versioned binary snapshot: scheme, templates, nonzero hashed weights,
// transition matrix. Embeddings are not stored.
void save_model(const CrfModel& model, const std::string& path);
CrfModel load_model(const std::string& path);
std::string serialize_model(const CrfModel& model);
CrfModel deserialize_model(std::string_view bytes);

}  // namespace etal
