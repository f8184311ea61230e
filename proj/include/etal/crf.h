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
#include <span>
#include <vector>

#include "etal/corpus.h"
#include "etal/label_scheme.h"

namespace etal {

// Log-space potentials of one sequence: score(y) = sum_t emission(t, y_t)
// + sum_{t>0} transition(y_{t-1}, y_t).
class PotentialTable {
 public:
  PotentialTable() = default;
  PotentialTable(int length, int num_labels)
      : length_(length),
        labels_(num_labels),
        emissions_(static_cast<std::size_t>(length) * num_labels, 0.0),
        transitions_(static_cast<std::size_t>(num_labels) * num_labels, 0.0) {}

  int length() const { return length_; }
  int num_labels() const { return labels_; }

  double emission(int t, Label y) const { return emissions_[t * labels_ + y]; }
  double& emission(int t, Label y) { return emissions_[t * labels_ + y]; }
  double transition(Label from, Label to) const { return transitions_[from * labels_ + to]; }
  double& transition(Label from, Label to) { return transitions_[from * labels_ + to]; }

  std::span<const double> emissions() const { return emissions_; }
  std::span<const double> transitions() const { return transitions_; }

 private:
  int length_ = 0;
  int labels_ = 0;
  std::vector<double> emissions_;
  std::vector<double> transitions_;
};

// A span the annotator labeled; type -1 marks not-an-entity.
struct AnnotatedSpan {
  int start = 0;
  int end = 0;
  int type = -1;

  friend bool operator==(const AnnotatedSpan&, const AnnotatedSpan&) = default;
};

// Allowed-label sets per position, as bit masks over label indices.
class PartialLabeling {
 public:
  PartialLabeling() = default;
  PartialLabeling(int length, int num_labels);

  static PartialLabeling from_labels(std::span<const Label> labels, int num_labels);

  int length() const { return static_cast<int>(allowed_.size()); }
  int num_labels() const { return labels_; }
  std::uint64_t full_mask() const;

  bool allows(int t, Label y) const { return (allowed_[t] >> y) & 1u; }
  std::uint64_t mask(int t) const { return allowed_[t]; }
  void restrict(int t, std::uint64_t mask);
  void pin(int t, Label y) { restrict(t, std::uint64_t{1} << y); }

  bool constrained(int t) const { return allowed_[t] != full_mask(); }
  // Single allowed label at t, or -1.
  Label pinned(int t) const;
  bool fully_constrained() const;
  bool unconstrained() const;

  // Induces {B-X} at start and {I-X} after it, or {O} throughout for type -1.
  void annotate(const AnnotatedSpan& span, const LabelScheme& scheme);

  const std::vector<AnnotatedSpan>& provenance() const { return provenance_; }

  friend bool operator==(const PartialLabeling&, const PartialLabeling&) = default;

 private:
  int labels_ = 0;
  std::vector<std::uint64_t> allowed_;
  std::vector<AnnotatedSpan> provenance_;
};

struct Marginals {
  int length = 0;
  int num_labels = 0;
  // T x L, row-major.
  std::vector<double> token;
  // (T-1) x L x L; slab t holds p(y_t = a, y_{t+1} = b).
  std::vector<double> pairwise;
  double log_z = 0.0;

  double at(int t, Label y) const { return token[t * num_labels + y]; }
  double pair(int t, Label a, Label b) const {
    return pairwise[(static_cast<std::size_t>(t) * num_labels + a) * num_labels + b];
  }
};

Marginals forward_backward(const PotentialTable& pot);
Marginals forward_backward(const PotentialTable& pot, const PartialLabeling& constraints);

// Forward recursion only. -inf when no sequence satisfies the constraints.
double log_partition(const PotentialTable& pot);
double log_partition(const PotentialTable& pot, const PartialLabeling& constraints);
// Same quantity from the backward recursion.
double log_partition_backward(const PotentialTable& pot);

double sequence_score(const PotentialTable& pot, std::span<const Label> labels);

struct ViterbiResult {
  std::vector<Label> labels;
  double score = 0.0;
};

// Ties go to the lower label index.
ViterbiResult viterbi(const PotentialTable& pot);

double log_sum_exp(std::span<const double> values);

}  // namespace etal
