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

#include "etal/label_scheme.h"

#include "etal/errors.h"

namespace etal {

LabelScheme::LabelScheme(std::vector<std::string> entity_types) : types_(std::move(entity_types)) {
  if (size() > kMaxLabels) throw Error("too many entity types for a 64-label scheme");
  for (std::size_t i = 0; i < types_.size(); ++i) {
    if (types_[i].empty()) throw Error("empty entity type name");
    for (std::size_t j = 0; j < i; ++j)
      if (types_[i] == types_[j]) throw Error("duplicate entity type '" + types_[i] + "'");
  }
}

std::vector<Label> LabelScheme::begin_labels() const {
  std::vector<Label> out;
  for (int k = 0; k < num_types(); ++k) out.push_back(begin(k));
  return out;
}

std::vector<Label> LabelScheme::inside_labels() const {
  std::vector<Label> out;
  for (int k = 0; k < num_types(); ++k) out.push_back(inside(k));
  return out;
}

std::string LabelScheme::name(Label y) const {
  if (y == kOutside) return "O";
  if (y < 0 || y >= size()) throw Error("label index out of range: " + std::to_string(y));
  return (is_begin(y) ? "B-" : "I-") + types_[type_of(y)];
}

std::optional<Label> LabelScheme::parse(std::string_view name) const {
  if (name == "O") return kOutside;
  if (name.size() < 3 || name[1] != '-') return std::nullopt;
  int type = type_index(name.substr(2));
  if (type < 0) return std::nullopt;
  if (name[0] == 'B') return begin(type);
  if (name[0] == 'I') return inside(type);
  return std::nullopt;
}

int LabelScheme::type_index(std::string_view type) const {
  for (std::size_t i = 0; i < types_.size(); ++i)
    if (types_[i] == type) return static_cast<int>(i);
  return -1;
}

bool LabelScheme::allows_transition(Label prev, Label next) const {
  if (!is_inside(next)) return true;
  return prev >= 0 && prev != kOutside && type_of(prev) == type_of(next);
}

bool LabelScheme::is_valid_bio2(std::span<const Label> labels) const {
  Label prev = -1;
  for (Label y : labels) {
    if (y < 0 || y >= size() || !allows_transition(prev, y)) return false;
    prev = y;
  }
  return true;
}

}  // namespace etal
