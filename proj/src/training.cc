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

#include "etal/training.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "etal/errors.h"

namespace etal {

namespace {

// Adds sum_t sum_y coef(t, y) * f(t, y) to grad.emission.
template <typename Coef>
void accumulate_emissions(const CrfModel& model, const SequenceFeatures& features, Coef coef,
                          Gradient& grad) {
  const int T = features.length(), L = model.num_labels();
  for (int t = 0; t < T; ++t) {
    auto feats = features.at(t);
    for (Label y = 0; y < L; ++y) {
      double c = coef(t, y);
      if (c == 0.0) continue;
      for (const auto& fv : feats)
        grad.emission.emplace_back(static_cast<std::uint32_t>(model.weight_index(fv.hash, y)), c * fv.value);
    }
  }
}

}  // namespace

void Gradient::compact() {
  std::sort(emission.begin(), emission.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::size_t out = 0;
  for (std::size_t i = 0; i < emission.size(); ++i) {
    if (out > 0 && emission[out - 1].first == emission[i].first)
      emission[out - 1].second += emission[i].second;
    else
      emission[out++] = emission[i];
  }
  emission.resize(out);
}

std::vector<double> Gradient::dense_emission(std::size_t feature_space) const {
  std::vector<double> out(feature_space, 0.0);
  for (const auto& [i, v] : emission) out.at(i) += v;
  return out;
}

LossAndGradient loss_and_grad_full(const CrfModel& model, const SequenceFeatures& features,
                                   std::span<const Label> labels) {
  const int T = features.length(), L = model.num_labels();
  if (static_cast<int>(labels.size()) != T)
    throw Error("label sequence length " + std::to_string(labels.size()) + " does not match sequence length " +
                std::to_string(T));
  PotentialTable pot = score_potentials(model, features);
  Marginals m = forward_backward(pot);
  LossAndGradient out;
  out.loss = m.log_z - sequence_score(pot, labels);
  accumulate_emissions(
      model, features, [&](int t, Label y) { return m.at(t, y) - (labels[t] == y ? 1.0 : 0.0); }, out.grad);
  out.grad.transition.assign(static_cast<std::size_t>(L) * L, 0.0);
  for (int t = 0; t + 1 < T; ++t) {
    for (Label a = 0; a < L; ++a)
      for (Label b = 0; b < L; ++b) out.grad.transition[a * L + b] += m.pair(t, a, b);
    out.grad.transition[labels[t] * L + labels[t + 1]] -= 1.0;
  }
  return out;
}

LossAndGradient loss_and_grad_full(const CrfModel& model, const LabeledSequence& seq,
                                   std::span<const Label> labels) {
  return loss_and_grad_full(model, model.extract(seq), labels);
}

LossAndGradient loss_and_grad_partial(const CrfModel& model, const SequenceFeatures& features,
                                      const PartialLabeling& partial) {
  const int T = features.length(), L = model.num_labels();
  if (partial.length() != T) throw Error("partial labeling length does not match sequence length");
  LossAndGradient out;
  out.grad.transition.assign(static_cast<std::size_t>(L) * L, 0.0);
  if (partial.unconstrained()) return out;
  PotentialTable pot = score_potentials(model, features);
  Marginals free = forward_backward(pot);
  Marginals clamped = forward_backward(pot, partial);
  out.loss = free.log_z - clamped.log_z;
  accumulate_emissions(
      model, features, [&](int t, Label y) { return free.at(t, y) - clamped.at(t, y); }, out.grad);
  for (int t = 0; t + 1 < T; ++t)
    for (Label a = 0; a < L; ++a)
      for (Label b = 0; b < L; ++b) out.grad.transition[a * L + b] += free.pair(t, a, b) - clamped.pair(t, a, b);
  return out;
}

LossAndGradient loss_and_grad_partial(const CrfModel& model, const LabeledSequence& seq,
                                      const PartialLabeling& partial) {
  return loss_and_grad_partial(model, model.extract(seq), partial);
}

TrainResult train(CrfModel model, std::span<const TrainingExample> data, const TrainConfig& config) {
  TrainResult result{std::move(model), {}};
  if (config.epochs <= 0) return result;
  if (data.empty()) throw Error("training data is empty");
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  auto& weights = result.model.weights();
  auto& transitions = result.model.transitions();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t i : order) {
      const auto& ex = data[i];
      LossAndGradient lg = std::holds_alternative<PartialLabeling>(ex.target)
                               ? loss_and_grad_partial(result.model, ex.features, std::get<PartialLabeling>(ex.target))
                               : loss_and_grad_full(result.model, ex.features, std::get<std::vector<Label>>(ex.target));
      if (!std::isfinite(lg.loss)) {
        std::ostringstream msg;
        msg << "non-finite loss " << lg.loss << " at epoch " << epoch + 1 << " on example " << i;
        throw TrainingError(msg.str());
      }
      total += lg.loss;
      for (const auto& [idx, g] : lg.grad.emission) weights[idx] -= config.learning_rate * g;
      for (std::size_t k = 0; k < transitions.size(); ++k)
        transitions[k] -= config.learning_rate * lg.grad.transition[k];
    }
    result.epoch_loss.push_back(total / static_cast<double>(data.size()));
  }
  return result;
}

}  // namespace etal
