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

#include <doctest.h>

#include <cmath>
#include <random>

#include "etal/errors.h"
#include "etal/xlingual.h"
#include "oracles.h"

using namespace etal;

namespace {

Matrix gaussian(std::mt19937_64& rng, int rows, int cols) {
  std::normal_distribution<double> g;
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = g(rng);
  return m;
}

Matrix random_orthogonal(std::mt19937_64& rng, int d) {
  Eigen::HouseholderQR<Matrix> qr(gaussian(rng, d, d));
  return qr.householderQ() * Matrix::Identity(d, d);
}

double orthogonality_error(const Matrix& m) {
  return (m.transpose() * m - Matrix::Identity(m.cols(), m.cols())).norm();
}

}  // namespace

TEST_CASE("procrustes identity and planted rotation") {
  std::mt19937_64 rng(1);
  Matrix x = gaussian(rng, 60, 10);
  auto same = procrustes_align(x, x);
  CHECK((same.mapping - Matrix::Identity(10, 10)).norm() < 1e-8);

  Matrix r = random_orthogonal(rng, 10);
  auto planted = procrustes_align(x, x * r.transpose());
  CHECK((planted.mapping - r).norm() < 1e-6);
  CHECK(orthogonality_error(planted.mapping) < 1e-8);
  CHECK(orthogonality_error(planted.u) < 1e-8);
  CHECK(orthogonality_error(planted.v) < 1e-8);
  CHECK(planted.residual < 1e-8);
  // Rows map into the shared space consistently: x V == (R x) U.
  Matrix y = x * r.transpose();
  CHECK((x * planted.source_projection() - y * planted.target_projection()).norm() < 1e-8);
}

TEST_CASE("procrustes with duplicated rows") {
  std::mt19937_64 rng(2);
  Matrix x = gaussian(rng, 30, 8), y = gaussian(rng, 30, 8);
  auto a = procrustes_align(x, y);
  Matrix x3(90, 8), y3(90, 8);
  x3 << x, x, x;
  y3 << y, y, y;
  auto b = procrustes_align(x3, y3);
  CHECK((a.mapping - b.mapping).norm() < 1e-10);
}

TEST_CASE("procrustes beats the identity and warns when underdetermined") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix x = gaussian(rng, 25, 6), y = gaussian(rng, 25, 6);
    auto a = procrustes_align(x, y);
    CHECK(a.residual <= (x - y).norm() + 1e-12);
    CHECK(orthogonality_error(a.mapping) < 1e-8);
  }
  Matrix x = gaussian(rng, 3, 6);
  auto under = procrustes_align(x, x);
  CHECK_FALSE(under.warnings.empty());
  CHECK(orthogonality_error(under.mapping) < 1e-8);
  CHECK_THROWS_AS(procrustes_align(Matrix(0, 3), Matrix(0, 3)), Error);
}

TEST_CASE("csls basics") {
  std::mt19937_64 rng(4);
  Matrix x = gaussian(rng, 15, 5);
  auto self = csls_neighbors(x, x, 1);
  for (int i = 0; i < 15; ++i) CHECK(self[i][0].index == i);

  Matrix cands(2, 3);
  cands << 1, 0, 0, 0, 1, 0;
  Matrix q(1, 3);
  q << 0, 1, 0;
  CHECK(csls_neighbors(q, cands, 1)[0][0].index == 1);

  Matrix zero = Matrix::Zero(1, 3);
  CHECK_THROWS_AS(csls_neighbors(zero, cands, 1), Error);
}

TEST_CASE("csls rankings equal the brute-force double loop") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix q = gaussian(rng, 20, 10), c = gaussian(rng, 20, 10);
    for (int k : {1, 3, 10}) {
      auto got = csls_neighbors(q, c, k);
      auto want = oracle::brute_force_csls(q, c, k);
      for (int i = 0; i < 20; ++i) {
        std::vector<int> idx;
        for (const auto& n : got[i]) idx.push_back(n.index);
        REQUIRE(idx == want[i]);
      }
    }
  }
}

TEST_CASE("property: csls top-1 ignores positive rescaling of a vector") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix q = gaussian(rng, 12, 6), c = gaussian(rng, 15, 6);
    auto base = csls_neighbors(q, c, 3, 1);
    q.row(rng() % 12) *= scale(rng);
    c.row(rng() % 15) *= scale(rng);
    auto scaled = csls_neighbors(q, c, 3, 1);
    for (int i = 0; i < 12; ++i) CHECK(base[i][0].index == scaled[i][0].index);
  }
}

namespace {

EmbeddingTable table_from(const Matrix& m, const std::string& prefix) {
  EmbeddingTable t(static_cast<int>(m.cols()));
  for (int i = 0; i < m.rows(); ++i) {
    std::vector<double> row(m.cols());
    for (int j = 0; j < m.cols(); ++j) row[j] = m(i, j);
    t.add(prefix + std::to_string(i), row);
  }
  return t;
}

}  // namespace

TEST_CASE("dictionary on identical spaces is the identity") {
  std::mt19937_64 rng(7);
  Matrix x = gaussian(rng, 40, 8);
  auto src = table_from(x, "w");
  auto tgt = table_from(x, "w");
  BilingualLexicon lex;
  for (int i = 0; i < 20; ++i) lex.pairs.push_back({"w" + std::to_string(i), "w" + std::to_string(i)});
  TransferOptions opt;
  auto align = align_embeddings(src, tgt, lex, opt);
  auto dict = build_dictionary(src, tgt, align, opt);
  CHECK(dict.entries.size() == 40);
  for (const auto& [s, t] : dict.entries) CHECK(s == t);
}

TEST_CASE("zero source vectors are excluded with a warning") {
  std::mt19937_64 rng(8);
  Matrix x = gaussian(rng, 10, 4);
  auto src = table_from(x, "w");
  std::vector<double> zero(4, 0.0);
  src.add("nil", zero);
  auto tgt = table_from(x, "w");
  BilingualLexicon lex;
  for (int i = 0; i < 10; ++i) lex.pairs.push_back({"w" + std::to_string(i), "w" + std::to_string(i)});
  TransferOptions opt;
  auto dict = build_dictionary(src, tgt, align_embeddings(src, tgt, lex, opt), opt);
  CHECK(dict.entries.count("nil") == 0);
  CHECK(dict.skipped == std::vector<std::string>{"nil"});
  CHECK_FALSE(dict.warnings.empty());
  CHECK_THROWS_AS(build_dictionary(EmbeddingTable(4), tgt, align_embeddings(src, tgt, lex, opt), opt), Error);
}

TEST_CASE("translate_corpus copies labels") {
  TranslationDictionary dict;
  dict.entries["city"] = "ciudad";
  dict.entries["the"] = "la";
  std::vector<LabeledSequence> src{{"s0", {"city"}, {5}},
                                   {"s1", {"the", "old", "city", "of", "Rome", "is", "the", "big", "city", "."},
                                    {0, 0, 0, 0, 5, 0, 0, 0, 0, 0}}};
  TranslationReport rep;
  auto out = translate_corpus(src, dict, &rep);
  CHECK(out[0].tokens == std::vector<std::string>{"ciudad"});
  CHECK(out[0].labels == src[0].labels);
  REQUIRE(out.size() == src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    CHECK(out[i].labels == src[i].labels);
    CHECK(out[i].size() == src[i].size());
  }
  // Hand count over the 10-token sequence plus the 1-token one: city x3, the x2.
  CHECK(rep.tokens == 11);
  CHECK(rep.translated == 5);
  auto same = translate_corpus(src, TranslationDictionary{});
  CHECK(same == src);
}
