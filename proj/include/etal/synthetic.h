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
#include <vector>

#include "etal/corpus.h"
#include "etal/label_scheme.h"

namespace etal {

// Generator for a labeled benchmark with a planted entity gazetteer.
//
// Entities are capitalized pseudo-words drawn from a per-type gazetteer with
// Zipfian frequencies, often preceded by type cue words. Most target names of
// a type end in one of that type's final syllables. Filler is lowercase text
// plus capitalized non-entity distractors.
//
// The transferred split stands in for a translated training set: most of its
// names come from a source gazetteer without the target's type endings, and
// some entity labels are lost (set to O).
struct SyntheticConfig {
  std::uint64_t seed = 1;
  int pool_size = 5000;
  int dev_size = 500;
  int test_size = 1000;
  int transferred_size = 1500;
  int entities_per_type = 1000;
  double zipf_exponent = 0.8;
  // Share of target names carrying their type's ending.
  double type_ending_rate = 0.8;
  // Share of transferred mentions that use a target-gazetteer name.
  double transfer_overlap = 0.2;
  double transfer_drop_rate = 0.3;
  // Capitalized non-entity words: vocabulary size and per-token rate.
  int distractor_count = 100;
  double distractor_rate = 0.03;
};

struct SyntheticCorpus {
  LabelScheme scheme;
  std::vector<LabeledSequence> pool;
  std::vector<LabeledSequence> dev;
  std::vector<LabeledSequence> test;
  std::vector<LabeledSequence> transferred;
};

SyntheticCorpus generate_synthetic(const SyntheticConfig& config);

}  // namespace etal
