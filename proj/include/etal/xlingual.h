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

#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "etal/corpus.h"
#include "etal/embeddings.h"

namespace etal {

using Matrix = Eigen::MatrixXd;

// Orthogonal map between two embedding spaces fitted on lexicon pairs.
//
// With SVD  Y_D^T X_D = U S V^T  the mapping is W = U V^T, so a source vector
// x (column) lands at W x. Writing embeddings as rows, the shared bilingual
// space is reached by X V on the source side and Y U on the target side,
// because x^T V = (W x)^T U.
struct AlignmentResult {
  Matrix u;
  Matrix v;
  Matrix mapping;
  double residual = 0.0;
  int pairs = 0;
  std::vector<std::string> warnings;

  const Matrix& source_projection() const { return v; }
  const Matrix& target_projection() const { return u; }
};

// Rows of source and target are aligned lexicon pairs.
AlignmentResult procrustes_align(const Matrix& source, const Matrix& target);

struct Neighbor {
  int index = 0;
  double score = 0.0;
};

// CSLS(x, y) = 2 cos(x, y) - r_T(x) - r_S(y), where r_T(x) is the mean cosine
// of x to its k nearest candidates and r_S(y) the mean cosine of y to its k
// nearest queries. Returns the top `top_n` candidates per query (all when
// top_n <= 0), best first; equal scores keep the lower index first.
std::vector<std::vector<Neighbor>> csls_neighbors(const Matrix& queries, const Matrix& candidates, int k,
                                                  int top_n = 0);

struct TranslationDictionary {
  std::unordered_map<std::string, std::string> entries;
  std::unordered_map<std::string, double> scores;
  std::size_t source_words = 0;
  std::vector<std::string> skipped;
  std::vector<std::string> warnings;

  double coverage() const {
    return source_words == 0 ? 0.0 : static_cast<double>(entries.size()) / static_cast<double>(source_words);
  }
};

struct TransferOptions {
  int csls_k = 10;
  // Mean-center, then unit-normalize, both tables before alignment.
  bool normalize = true;
};

// Rows of the table as a matrix, optionally centered and unit-normalized.
Matrix embedding_matrix(const EmbeddingTable& table, bool normalize);

// Fits the alignment on the lexicon pairs present in both tables.
AlignmentResult align_embeddings(const EmbeddingTable& source, const EmbeddingTable& target,
                                 const BilingualLexicon& lexicon, const TransferOptions& options);

// CSLS top-1 target word for every source word in the shared space.
TranslationDictionary build_dictionary(const EmbeddingTable& source, const EmbeddingTable& target,
                                       const AlignmentResult& alignment, const TransferOptions& options);

struct TranslationReport {
  std::size_t tokens = 0;
  std::size_t translated = 0;
  double coverage() const { return tokens == 0 ? 0.0 : static_cast<double>(translated) / static_cast<double>(tokens); }
};

// Word-by-word translation with labels copied positionally; tokens without a
// dictionary entry are kept verbatim.
std::vector<LabeledSequence> translate_corpus(std::span<const LabeledSequence> source,
                                              const TranslationDictionary& dictionary,
                                              TranslationReport* report = nullptr);

// source TAB target TAB score, sorted by source word.
std::string dictionary_to_tsv(const TranslationDictionary& dictionary);

}  // namespace etal
