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
#include <utility>
#include <variant>
#include <vector>

#include "etal/crf.h"
#include "etal/model.h"

namespace etal {

// Sparse gradient over the hashed emission weights plus a dense transition
// block. Emission entries may repeat an index until compact() is called.
struct Gradient {
  std::vector<std::pair<std::uint32_t, double>> emission;
  std::vector<double> transition;

  void compact();
  std::vector<double> dense_emission(std::size_t feature_space) const;
};

struct LossAndGradient {
  double loss = 0.0;
  Gradient grad;
};

// -log p(labels | x); gradient = model expectation - empirical counts.
LossAndGradient loss_and_grad_full(const CrfModel& model, const SequenceFeatures& features,
                                   std::span<const Label> labels);
LossAndGradient loss_and_grad_full(const CrfModel& model, const LabeledSequence& seq,
                                   std::span<const Label> labels);

// log Z - log Z_constrained; gradient = unconstrained - constrained expectation.
LossAndGradient loss_and_grad_partial(const CrfModel& model, const SequenceFeatures& features,
                                      const PartialLabeling& partial);
LossAndGradient loss_and_grad_partial(const CrfModel& model, const LabeledSequence& seq,
                                      const PartialLabeling& partial);

struct TrainingExample {
  SequenceFeatures features;
  std::variant<std::vector<Label>, PartialLabeling> target;
};

struct TrainConfig {
  double learning_rate = 0.015;
  int epochs = 30;
  std::uint64_t seed = 1;
};

struct TrainResult {
  CrfModel model;
  std::vector<double> epoch_loss;
};

// Plain SGD, one example per step, examples reshuffled every epoch.
// Throws TrainingError on a non-finite loss.
TrainResult train(CrfModel model, std::span<const TrainingExample> data, const TrainConfig& config);

}  // namespace etal
