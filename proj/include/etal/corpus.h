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

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "etal/label_scheme.h"

namespace etal {

struct LabeledSequence {
  std::string id;
  std::vector<std::string> tokens;
  // Empty when unlabeled; otherwise one BIO2 label per token.
  std::vector<Label> labels;

  int size() const { return static_cast<int>(tokens.size()); }
  bool labeled() const { return !labels.empty(); }

  friend bool operator==(const LabeledSequence&, const LabeledSequence&) = default;
};

// Entity over tokens [start, end).
struct Entity {
  int start = 0;
  int end = 0;
  int type = 0;

  int length() const { return end - start; }
  friend auto operator<=>(const Entity&, const Entity&) = default;
};

// Entities of a BIO2 sequence. A stray I-X (invalid BIO2) opens a new entity.
std::vector<Entity> extract_entities(std::span<const Label> labels, const LabelScheme& scheme);
std::vector<Label> entities_to_labels(int length, std::span<const Entity> entities,
                                      const LabelScheme& scheme);

// Column format: token first, label last, blank line between sequences.
// IOB1 documents are converted to BIO2. A document is read as IOB1 when no B-X
// tag opens an entity (B-X only separates adjacent same-type entities);
// otherwise it must already be valid BIO2.
std::vector<LabeledSequence> parse_conll(std::string_view text, const LabelScheme& scheme);
std::string write_conll(std::span<const LabeledSequence> seqs, const LabelScheme& scheme);

// IOB1 -> BIO2 on label strings. Exposed for tests.
std::vector<Label> iob1_to_bio2(std::span<const Label> labels, const LabelScheme& scheme);

// One JSON object per line: {"id": ..., "tokens": [...], "labels": [...]?}.
std::vector<LabeledSequence> parse_jsonl(std::string_view text, const LabelScheme& scheme);
std::string write_jsonl(std::span<const LabeledSequence> seqs, const LabelScheme& scheme);

std::string join_tokens(std::span<const std::string> tokens, int start, int end);

std::string read_file(const std::string& path);
// Writes via a temporary file and rename.
void write_file(const std::string& path, std::string_view contents);

}  // namespace etal
