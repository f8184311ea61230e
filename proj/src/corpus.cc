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

#include "etal/corpus.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "etal/errors.h"

namespace etal {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

struct RawSequence {
  std::vector<std::string> tokens;
  std::vector<Label> labels;
  std::vector<std::size_t> lines;
};

}  // namespace

std::vector<Entity> extract_entities(std::span<const Label> labels, const LabelScheme& scheme) {
  std::vector<Entity> out;
  int n = static_cast<int>(labels.size());
  int t = 0;
  while (t < n) {
    Label y = labels[t];
    if (scheme.is_outside(y)) {
      ++t;
      continue;
    }
    int type = scheme.type_of(y);
    int end = t + 1;
    while (end < n && labels[end] == scheme.inside(type)) ++end;
    out.push_back({t, end, type});
    t = end;
  }
  return out;
}

std::vector<Label> entities_to_labels(int length, std::span<const Entity> entities,
                                      const LabelScheme& scheme) {
  std::vector<Label> labels(length, LabelScheme::kOutside);
  for (const Entity& e : entities) {
    if (e.start < 0 || e.end > length || e.start >= e.end) throw Error("entity out of range");
    labels[e.start] = scheme.begin(e.type);
    for (int t = e.start + 1; t < e.end; ++t) labels[t] = scheme.inside(e.type);
  }
  return labels;
}

std::vector<Label> iob1_to_bio2(std::span<const Label> labels, const LabelScheme& scheme) {
  std::vector<Label> out(labels.begin(), labels.end());
  for (std::size_t t = 0; t < out.size(); ++t) {
    if (!scheme.is_inside(out[t])) continue;
    Label prev = t == 0 ? LabelScheme::kOutside : out[t - 1];
    if (prev == LabelScheme::kOutside || scheme.type_of(prev) != scheme.type_of(out[t]))
      out[t] = scheme.begin(scheme.type_of(out[t]));
  }
  return out;
}

std::vector<LabeledSequence> parse_conll(std::string_view text, const LabelScheme& scheme) {
  std::vector<RawSequence> raw;
  RawSequence current;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  auto flush = [&] {
    if (!current.tokens.empty()) raw.push_back(std::move(current));
    current = {};
  };
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    ++line_no;
    pos = nl + 1;
    auto fields = split_ws(line);
    if (fields.empty()) {
      flush();
      continue;
    }
    if (fields[0] == "-DOCSTART-") {
      flush();
      continue;
    }
    if (fields.size() < 2) throw ParseError(line_no, "expected token and label");
    auto label = scheme.parse(fields.back());
    if (!label) throw ParseError(line_no, "unknown label '" + std::string(fields.back()) + "'");
    current.tokens.emplace_back(fields.front());
    current.labels.push_back(*label);
    current.lines.push_back(line_no);
  }
  flush();

  // A B-X that opens an entity only occurs in BIO2 text.
  bool bio2 = false;
  for (const auto& r : raw) {
    for (std::size_t t = 0; t < r.labels.size() && !bio2; ++t) {
      Label y = r.labels[t];
      if (!scheme.is_begin(y)) continue;
      Label prev = t == 0 ? LabelScheme::kOutside : r.labels[t - 1];
      if (prev == LabelScheme::kOutside || scheme.type_of(prev) != scheme.type_of(y)) bio2 = true;
    }
    if (bio2) break;
  }

  std::vector<LabeledSequence> out;
  out.reserve(raw.size());
  for (auto& r : raw) {
    LabeledSequence seq;
    seq.id = "s" + std::to_string(out.size());
    seq.tokens = std::move(r.tokens);
    if (bio2) {
      Label prev = -1;
      for (std::size_t t = 0; t < r.labels.size(); ++t) {
        if (!scheme.allows_transition(prev, r.labels[t]))
          throw ParseError(r.lines[t], "invalid BIO2 sequence: '" + scheme.name(r.labels[t]) +
                                           "' cannot follow '" +
                                           (prev < 0 ? std::string("start") : scheme.name(prev)) +
                                           "'");
        prev = r.labels[t];
      }
      seq.labels = std::move(r.labels);
    } else {
      seq.labels = iob1_to_bio2(r.labels, scheme);
    }
    out.push_back(std::move(seq));
  }
  return out;
}

std::string write_conll(std::span<const LabeledSequence> seqs, const LabelScheme& scheme) {
  std::string out;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const auto& s = seqs[i];
    if (!s.labeled()) throw Error("cannot write unlabeled sequence '" + s.id + "' as CoNLL");
    if (s.labels.size() != s.tokens.size()) throw Error("label count mismatch in '" + s.id + "'");
    if (i > 0) out += '\n';
    for (std::size_t t = 0; t < s.tokens.size(); ++t) {
      out += s.tokens[t];
      out += ' ';
      out += scheme.name(s.labels[t]);
      out += '\n';
    }
  }
  return out;
}

std::vector<LabeledSequence> parse_jsonl(std::string_view text, const LabelScheme& scheme) {
  std::vector<LabeledSequence> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    ++line_no;
    pos = nl + 1;
    if (split_ws(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("tokens") || !j["tokens"].is_array())
      throw ParseError(line_no, "expected object with a 'tokens' array");
    LabeledSequence seq;
    seq.id = j.contains("id") ? j["id"].get<std::string>() : "s" + std::to_string(out.size());
    for (const auto& tok : j["tokens"]) {
      if (!tok.is_string() || tok.get<std::string>().empty())
        throw ParseError(line_no, "tokens must be non-empty strings");
      seq.tokens.push_back(tok.get<std::string>());
    }
    if (seq.tokens.empty()) throw ParseError(line_no, "empty sequence");
    if (j.contains("labels") && !j["labels"].is_null()) {
      for (const auto& l : j["labels"]) {
        auto label = scheme.parse(l.get<std::string>());
        if (!label) throw ParseError(line_no, "unknown label '" + l.get<std::string>() + "'");
        seq.labels.push_back(*label);
      }
      if (seq.labels.size() != seq.tokens.size())
        throw ParseError(line_no, "label count does not match token count");
      if (!scheme.is_valid_bio2(seq.labels)) throw ParseError(line_no, "invalid BIO2 sequence");
    }
    out.push_back(std::move(seq));
  }
  return out;
}

std::string write_jsonl(std::span<const LabeledSequence> seqs, const LabelScheme& scheme) {
  std::string out;
  for (const auto& s : seqs) {
    nlohmann::json j;
    j["id"] = s.id;
    j["tokens"] = s.tokens;
    if (s.labeled()) {
      std::vector<std::string> names;
      for (Label y : s.labels) names.push_back(scheme.name(y));
      j["labels"] = names;
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string join_tokens(std::span<const std::string> tokens, int start, int end) {
  std::string out;
  for (int t = start; t < end; ++t) {
    if (t > start) out += ' ';
    out += tokens[t];
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + path + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error("write failed for '" + path + "'");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace etal
