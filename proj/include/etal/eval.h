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

namespace etal {

struct SpanCounts {
  long gold = 0;
  long predicted = 0;
  long correct = 0;

  double precision() const { return predicted == 0 ? 0.0 : static_cast<double>(correct) / predicted; }
  double recall() const { return gold == 0 ? 0.0 : static_cast<double>(correct) / gold; }
  double f1() const {
    double p = precision(), r = recall();
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }
  SpanCounts& operator+=(const SpanCounts& o) {
    gold += o.gold;
    predicted += o.predicted;
    correct += o.correct;
    return *this;
  }
  friend bool operator==(const SpanCounts&, const SpanCounts&) = default;
};

struct EvalReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  SpanCounts counts;
  std::map<std::string, SpanCounts> per_type;
};

// Exact-match span F1 over label sequences.
SpanCounts span_counts(std::span<const Label> predicted, std::span<const Label> gold, const LabelScheme& scheme);
EvalReport span_f1(std::span<const LabeledSequence> predicted, std::span<const LabeledSequence> gold,
                   const LabelScheme& scheme);

struct BootstrapSystem {
  std::string name;
  double mean_f1 = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  // Fraction of iterations in which this system scored at least the reference F1.
  double win_rate = 0.0;
  // win_rate < 0.05; never set for the reference itself.
  bool significantly_worse = false;

  friend bool operator==(const BootstrapSystem&, const BootstrapSystem&) = default;
};

struct BootstrapReport {
  std::vector<BootstrapSystem> systems;
  int reference = 0;
  int iterations = 0;
  double sample_fraction = 0.0;
  std::uint64_t seed = 0;
  // iteration x system F1.
  std::vector<std::vector<double>> scores;

  friend bool operator==(const BootstrapReport&, const BootstrapReport&) = default;
};

struct BootstrapOptions {
  int iterations = 10000;
  double sample_fraction = 0.5;
  std::uint64_t seed = 1;
  // System the others are tested against.
  int reference = 0;
};

// Paired bootstrap over sequences: every iteration draws ceil(frac * N)
// sequences with replacement and scores all systems on that same draw.
BootstrapReport paired_bootstrap(std::span<const std::vector<LabeledSequence>> systems,
                                 std::span<const std::string> names, std::span<const LabeledSequence> gold,
                                 const LabelScheme& scheme, const BootstrapOptions& options);

std::string report_to_json(const EvalReport& report);
std::string report_to_json(const BootstrapReport& report);
std::string bootstrap_scores_csv(const BootstrapReport& report);

}  // namespace etal
