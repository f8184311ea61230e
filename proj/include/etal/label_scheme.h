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

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace etal {

using Label = int;

// BIO2 label set over an ordered list of entity types.
//
// Index layout: O is 0, then B-X and I-X interleave per type, so type k owns
// labels 2k+1 (begin) and 2k+2 (inside). The layout depends only on the type
// order, which makes indices stable across runs and files.
class LabelScheme {
 public:
  static constexpr Label kOutside = 0;
  // Constraint sets are 64-bit masks.
  static constexpr int kMaxLabels = 64;

  LabelScheme() = default;
  explicit LabelScheme(std::vector<std::string> entity_types);

  static LabelScheme conll() { return LabelScheme({"PER", "ORG", "LOC", "MISC"}); }

  int size() const { return 2 * num_types() + 1; }
  int num_types() const { return static_cast<int>(types_.size()); }
  const std::vector<std::string>& entity_types() const { return types_; }

  Label begin(int type) const { return 2 * type + 1; }
  Label inside(int type) const { return 2 * type + 2; }
  bool is_outside(Label y) const { return y == kOutside; }
  bool is_begin(Label y) const { return y > 0 && y % 2 == 1; }
  bool is_inside(Label y) const { return y > 0 && y % 2 == 0; }
  // -1 for O.
  int type_of(Label y) const { return y == kOutside ? -1 : (y - 1) / 2; }

  std::vector<Label> begin_labels() const;
  std::vector<Label> inside_labels() const;

  std::string name(Label y) const;
  std::optional<Label> parse(std::string_view name) const;
  // -1 when unknown.
  int type_index(std::string_view type) const;

  // BIO2 admissibility of y following prev; prev == -1 means sequence start.
  bool allows_transition(Label prev, Label next) const;
  bool is_valid_bio2(std::span<const Label> labels) const;

  friend bool operator==(const LabelScheme&, const LabelScheme&) = default;

 private:
  std::vector<std::string> types_;
};

}  // namespace etal
