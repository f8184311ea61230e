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

#include "etal/embeddings.h"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "etal/errors.h"

namespace etal {

namespace {

std::vector<std::string_view> fields_of(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  std::string tmp(s);
  char* end = nullptr;
  out = std::strtod(tmp.c_str(), &end);
  return end == tmp.c_str() + tmp.size() && std::isfinite(out);
}

bool is_integer(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s)
    if (c < '0' || c > '9') return false;
  return true;
}

}  // namespace

bool EmbeddingTable::add(std::string word, std::span<const double> vector) {
  if (static_cast<int>(vector.size()) != dimension_)
    throw Error("vector for '" + word + "' has dimension " + std::to_string(vector.size()) +
                ", expected " + std::to_string(dimension_));
  if (index_.count(word)) return false;
  index_.emplace(word, words_.size());
  words_.push_back(std::move(word));
  values_.insert(values_.end(), vector.begin(), vector.end());
  return true;
}

std::span<const double> EmbeddingTable::find(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return {};
  return row(it->second);
}

EmbeddingTable parse_embeddings(std::string_view text) {
  EmbeddingTable table;
  bool have_dim = false;
  std::size_t duplicates = 0;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  std::vector<double> vec;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    auto fields = fields_of(line);
    if (fields.empty()) continue;
    if (line_no == 1 && fields.size() == 2 && is_integer(fields[0]) && is_integer(fields[1])) {
      int dim = std::atoi(std::string(fields[1]).c_str());
      if (dim <= 0) throw ParseError(line_no, "header dimension must be positive");
      table = EmbeddingTable(dim);
      have_dim = true;
      continue;
    }
    if (fields.size() < 2) throw ParseError(line_no, "expected word followed by floats");
    int dim = static_cast<int>(fields.size()) - 1;
    if (!have_dim) {
      table = EmbeddingTable(dim);
      have_dim = true;
    } else if (dim != table.dimension()) {
      throw ParseError(line_no, "dimension " + std::to_string(dim) + " does not match " +
                                    std::to_string(table.dimension()));
    }
    vec.assign(dim, 0.0);
    for (int k = 0; k < dim; ++k)
      if (!parse_double(fields[k + 1], vec[k]))
        throw ParseError(line_no, "non-numeric field '" + std::string(fields[k + 1]) + "'");
    if (!table.add(std::string(fields[0]), vec)) ++duplicates;
  }
  table.set_duplicates(duplicates);
  return table;
}

std::string write_embeddings(const EmbeddingTable& table) {
  std::ostringstream out;
  out.precision(17);
  out << table.size() << ' ' << table.dimension() << '\n';
  for (std::size_t i = 0; i < table.size(); ++i) {
    out << table.words()[i];
    for (double v : table.row(i)) out << ' ' << v;
    out << '\n';
  }
  return out.str();
}

BilingualLexicon parse_lexicon(std::string_view text) {
  BilingualLexicon lex;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    auto fields = fields_of(line);
    if (fields.empty()) continue;
    if (fields.size() != 2) throw ParseError(line_no, "expected 'source<TAB>target'");
    lex.pairs.emplace_back(fields[0], fields[1]);
  }
  if (lex.pairs.empty()) throw ParseError(0, "lexicon is empty");
  return lex;
}

LexiconCoverage check_lexicon(const BilingualLexicon& lexicon, const EmbeddingTable& source,
                              const EmbeddingTable& target) {
  LexiconCoverage cov;
  for (const auto& p : lexicon.pairs) {
    if (source.contains(p.first) && target.contains(p.second))
      cov.usable.push_back(p);
    else
      cov.excluded.push_back(p);
  }
  return cov;
}

}  // namespace etal
