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

#include "etal/xlingual.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "etal/errors.h"

namespace etal {

namespace {

Matrix unit_rows(const Matrix& m) {
  Matrix out = m;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    double n = out.row(i).norm();
    if (n == 0.0) throw Error("zero vector at row " + std::to_string(i) + ": cosine is undefined");
    out.row(i) /= n;
  }
  return out;
}

// Mean of the k largest entries of each row.
Eigen::VectorXd mean_top_k(const Matrix& sims, int k) {
  Eigen::VectorXd out(sims.rows());
  std::vector<double> row(sims.cols());
  int kk = std::min<int>(k, static_cast<int>(sims.cols()));
  for (Eigen::Index i = 0; i < sims.rows(); ++i) {
    for (Eigen::Index j = 0; j < sims.cols(); ++j) row[j] = sims(i, j);
    std::nth_element(row.begin(), row.begin() + (kk - 1), row.end(), std::greater<>());
    out(i) = std::accumulate(row.begin(), row.begin() + kk, 0.0) / kk;
  }
  return out;
}

}  // namespace

AlignmentResult procrustes_align(const Matrix& source, const Matrix& target) {
  if (source.rows() < 1) throw Error("alignment needs at least one pair");
  if (source.rows() != target.rows() || source.cols() != target.cols())
    throw Error("source and target pair matrices differ in shape");
  AlignmentResult r;
  r.pairs = static_cast<int>(source.rows());
  if (source.rows() < source.cols())
    r.warnings.push_back("fewer lexicon pairs (" + std::to_string(source.rows()) + ") than dimensions (" +
                         std::to_string(source.cols()) + "); the mapping is underdetermined");
  Matrix cross = target.transpose() * source;
  Eigen::JacobiSVD<Matrix> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  r.u = svd.matrixU();
  r.v = svd.matrixV();
  r.mapping = r.u * r.v.transpose();
  r.residual = (source * r.mapping.transpose() - target).norm();
  return r;
}

std::vector<std::vector<Neighbor>> csls_neighbors(const Matrix& queries, const Matrix& candidates, int k,
                                                  int top_n) {
  if (k < 1) throw Error("CSLS neighborhood size must be at least 1");
  if (queries.cols() != candidates.cols()) throw Error("query and candidate dimensions differ");
  Matrix q = unit_rows(queries);
  Matrix c = unit_rows(candidates);
  Matrix sims = q * c.transpose();
  Eigen::VectorXd r_target = mean_top_k(sims, k);
  Eigen::VectorXd r_source = mean_top_k(sims.transpose(), k);
  const int n_cand = static_cast<int>(c.rows());
  const int keep = top_n <= 0 ? n_cand : std::min(top_n, n_cand);
  std::vector<std::vector<Neighbor>> out(q.rows());
  std::vector<Neighbor> row(n_cand);
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    for (int j = 0; j < n_cand; ++j) row[j] = {j, 2.0 * sims(i, j) - r_target(i) - r_source(j)};
    auto better = [](const Neighbor& a, const Neighbor& b) {
      return a.score != b.score ? a.score > b.score : a.index < b.index;
    };
    std::partial_sort(row.begin(), row.begin() + keep, row.end(), better);
    out[i].assign(row.begin(), row.begin() + keep);
  }
  return out;
}

Matrix embedding_matrix(const EmbeddingTable& table, bool normalize) {
  Matrix m(static_cast<Eigen::Index>(table.size()), table.dimension());
  for (std::size_t i = 0; i < table.size(); ++i) {
    auto row = table.row(i);
    for (int d = 0; d < table.dimension(); ++d) m(static_cast<Eigen::Index>(i), d) = row[d];
  }
  if (normalize && m.rows() > 0) {
    Eigen::RowVectorXd mean = m.colwise().mean();
    m.rowwise() -= mean;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      double n = m.row(i).norm();
      if (n > 0.0) m.row(i) /= n;
    }
  }
  return m;
}

namespace {

std::unordered_map<std::string, Eigen::Index> row_index(const EmbeddingTable& t) {
  std::unordered_map<std::string, Eigen::Index> out;
  for (std::size_t i = 0; i < t.size(); ++i) out.emplace(t.words()[i], static_cast<Eigen::Index>(i));
  return out;
}

}  // namespace

AlignmentResult align_embeddings(const EmbeddingTable& source, const EmbeddingTable& target,
                                 const BilingualLexicon& lexicon, const TransferOptions& options) {
  if (source.dimension() != target.dimension()) throw Error("source and target embeddings differ in dimension");
  auto cov = check_lexicon(lexicon, source, target);
  if (cov.usable.empty()) throw Error("no lexicon pair has vectors on both sides");
  Matrix xs = embedding_matrix(source, options.normalize);
  Matrix ys = embedding_matrix(target, options.normalize);
  auto si = row_index(source), ti = row_index(target);
  Matrix xd(static_cast<Eigen::Index>(cov.usable.size()), source.dimension());
  Matrix yd(xd.rows(), xd.cols());
  for (std::size_t p = 0; p < cov.usable.size(); ++p) {
    xd.row(static_cast<Eigen::Index>(p)) = xs.row(si.at(cov.usable[p].first));
    yd.row(static_cast<Eigen::Index>(p)) = ys.row(ti.at(cov.usable[p].second));
  }
  AlignmentResult r = procrustes_align(xd, yd);
  if (!cov.excluded.empty())
    r.warnings.push_back(std::to_string(cov.excluded.size()) + " lexicon pairs excluded (missing vectors)");
  return r;
}

TranslationDictionary build_dictionary(const EmbeddingTable& source, const EmbeddingTable& target,
                                       const AlignmentResult& alignment, const TransferOptions& options) {
  if (source.empty() || target.empty()) throw Error("empty vocabulary");
  if (alignment.mapping.rows() != source.dimension() || alignment.mapping.rows() != target.dimension())
    throw Error("alignment dimension does not match the embedding tables");
  TranslationDictionary dict;
  dict.source_words = source.size();

  Matrix xs = embedding_matrix(source, options.normalize);
  std::vector<Eigen::Index> kept;
  auto is_zero = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
  };
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    if (xs.row(i).norm() == 0.0 || is_zero(source.row(static_cast<std::size_t>(i))))
      dict.skipped.push_back(source.words()[i]);
    else
      kept.push_back(i);
  }
  if (!dict.skipped.empty())
    dict.warnings.push_back(std::to_string(dict.skipped.size()) + " source words with zero vectors excluded");
  Matrix ys = embedding_matrix(target, options.normalize);
  std::vector<Eigen::Index> tkept;
  for (Eigen::Index i = 0; i < ys.rows(); ++i)
    if (!is_zero(target.row(static_cast<std::size_t>(i))) && ys.row(i).norm() > 0.0) tkept.push_back(i);
  if (kept.empty() || tkept.empty()) return dict;

  Matrix q(static_cast<Eigen::Index>(kept.size()), xs.cols());
  for (std::size_t i = 0; i < kept.size(); ++i) q.row(static_cast<Eigen::Index>(i)) = xs.row(kept[i]);
  Matrix c(static_cast<Eigen::Index>(tkept.size()), ys.cols());
  for (std::size_t i = 0; i < tkept.size(); ++i) c.row(static_cast<Eigen::Index>(i)) = ys.row(tkept[i]);
  Matrix mapped_q = q * alignment.source_projection();
  Matrix mapped_c = c * alignment.target_projection();
  auto nn = csls_neighbors(mapped_q, mapped_c, options.csls_k, 1);
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const auto& src = source.words()[kept[i]];
    const auto& best = nn[i].front();
    dict.entries[src] = target.words()[tkept[best.index]];
    dict.scores[src] = best.score;
  }
  return dict;
}

std::vector<LabeledSequence> translate_corpus(std::span<const LabeledSequence> source,
                                              const TranslationDictionary& dictionary,
                                              TranslationReport* report) {
  std::vector<LabeledSequence> out(source.begin(), source.end());
  TranslationReport rep;
  for (auto& seq : out) {
    for (auto& tok : seq.tokens) {
      ++rep.tokens;
      auto it = dictionary.entries.find(tok);
      if (it == dictionary.entries.end()) continue;
      tok = it->second;
      ++rep.translated;
    }
  }
  if (report) *report = rep;
  return out;
}

std::string dictionary_to_tsv(const TranslationDictionary& dictionary) {
  std::vector<std::string> keys;
  for (const auto& [k, v] : dictionary.entries) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  std::ostringstream out;
  out.precision(10);
  for (const auto& k : keys) {
    auto s = dictionary.scores.find(k);
    out << k << '\t' << dictionary.entries.at(k) << '\t' << (s == dictionary.scores.end() ? 0.0 : s->second) << '\n';
  }
  return out.str();
}

}  // namespace etal
