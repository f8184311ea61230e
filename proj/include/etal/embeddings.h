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
#include <unordered_map>
#include <utility>
#include <vector>

namespace etal {

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(int dimension) : dimension_(dimension) {}

  int dimension() const { return dimension_; }
  std::size_t size() const { return words_.size(); }
  bool empty() const { return words_.empty(); }
  const std::vector<std::string>& words() const { return words_; }

  // False (and no change) when the word is already present.
  bool add(std::string word, std::span<const double> vector);
  bool contains(std::string_view word) const { return index_.count(std::string(word)) > 0; }
  // Empty span when absent.
  std::span<const double> find(std::string_view word) const;
  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * dimension_, static_cast<std::size_t>(dimension_)};
  }

  // Duplicate words dropped during parsing.
  std::size_t duplicates() const { return duplicates_; }
  void set_duplicates(std::size_t n) { duplicates_ = n; }

 private:
  int dimension_ = 0;
  std::vector<std::string> words_;
  std::vector<double> values_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t duplicates_ = 0;
};

// word + D floats per line; an optional leading "count dim" header.
EmbeddingTable parse_embeddings(std::string_view text);
std::string write_embeddings(const EmbeddingTable& table);

struct BilingualLexicon {
  std::vector<std::pair<std::string, std::string>> pairs;
};

// source TAB target per line (any whitespace accepted).
BilingualLexicon parse_lexicon(std::string_view text);

struct LexiconCoverage {
  std::vector<std::pair<std::string, std::string>> usable;
  std::vector<std::pair<std::string, std::string>> excluded;
};

// Splits pairs by whether both words have vectors.
LexiconCoverage check_lexicon(const BilingualLexicon& lexicon, const EmbeddingTable& source,
                              const EmbeddingTable& target);

}  // namespace etal
