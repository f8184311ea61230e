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

#include "etal/model.h"

#include <cctype>
#include <cmath>
#include <cstring>
#include <limits>

#include <json.hpp>

#include "etal/errors.h"

namespace etal {

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::uint64_t hash_parts(std::string_view prefix, std::string_view value) {
  std::uint64_t h = kFnvOffset;
  for (char c : prefix) h = (h ^ static_cast<unsigned char>(c)) * kFnvPrime;
  h = (h ^ 0x1fu) * kFnvPrime;
  for (char c : value) h = (h ^ static_cast<unsigned char>(c)) * kFnvPrime;
  return h;
}

constexpr char kMagic[8] = {'E', 'T', 'A', 'L', 'C', 'R', 'F', '\0'};
constexpr std::uint32_t kModelVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw CorruptFileError("model file truncated");
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string_view take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw CorruptFileError("model file truncated");
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t hash_feature(std::string_view name) { return hash_parts(name, {}); }

std::string word_shape(std::string_view word) {
  std::string out;
  for (unsigned char c : word) {
    char k = std::isupper(c) ? 'X' : std::islower(c) ? 'x' : std::isdigit(c) ? 'd' : c >= 0x80 ? 'u' : static_cast<char>(c);
    if (out.empty() || out.back() != k) out += k;
  }
  return out;
}

CrfModel::CrfModel(LabelScheme scheme, FeatureConfig config,
                   std::shared_ptr<const EmbeddingTable> embeddings)
    : scheme_(std::move(scheme)), config_(config), embeddings_(std::move(embeddings)) {
  if (config_.hash_bits < 1 || config_.hash_bits > 28) throw Error("hash_bits out of range");
  weights_.assign(std::size_t{1} << config_.hash_bits, 0.0);
  transitions_.assign(static_cast<std::size_t>(num_labels()) * num_labels(), 0.0);
}

std::size_t CrfModel::weight_index(std::uint64_t feature_hash, Label y) const {
  // The label weights of one feature sit next to each other.
  return static_cast<std::size_t>((mix64(feature_hash) + static_cast<std::uint64_t>(y)) & (weights_.size() - 1));
}

SequenceFeatures CrfModel::extract(std::span<const std::string> tokens) const {
  SequenceFeatures f;
  const int n = static_cast<int>(tokens.size());
  static const std::uint64_t bias = hash_feature("bias");
  for (int t = 0; t < n; ++t) {
    std::string_view w = tokens[t];
    f.add(bias, 1.0);
    if (config_.word) f.add(hash_parts("w", w), 1.0);
    std::string lw = lowercase(w);
    if (config_.lowercase) f.add(hash_parts("lw", lw), 1.0);
    for (int k = 1; k <= config_.affix_length && k <= static_cast<int>(w.size()); ++k) {
      f.add(hash_parts("p" + std::to_string(k), w.substr(0, k)), 1.0);
      f.add(hash_parts("s" + std::to_string(k), w.substr(w.size() - k)), 1.0);
    }
    if (config_.shape) f.add(hash_parts("shape", word_shape(w)), 1.0);
    if (config_.context) {
      f.add(hash_parts("prev", t > 0 ? lowercase(tokens[t - 1]) : std::string("<s>")), 1.0);
      f.add(hash_parts("next", t + 1 < n ? lowercase(tokens[t + 1]) : std::string("</s>")), 1.0);
    }
    if (embeddings_) {
      auto vec = embeddings_->find(w);
      if (vec.empty()) vec = embeddings_->find(lw);
      if (config_.in_embeddings) f.add(hash_parts("emb", vec.empty() ? "0" : "1"), 1.0);
      int k = std::min<int>(config_.embedding_components, static_cast<int>(vec.size()));
      for (int i = 0; i < k; ++i) f.add(hash_parts("e", std::to_string(i)), vec[i]);
    }
    f.end_position();
  }
  return f;
}

PotentialTable score_potentials(const CrfModel& model, const SequenceFeatures& features) {
  const int T = features.length(), L = model.num_labels();
  PotentialTable pot(T, L);
  const auto& w = model.weights();
  for (int t = 0; t < T; ++t) {
    auto feats = features.at(t);
    for (Label y = 0; y < L; ++y) {
      double s = 0.0;
      for (const auto& fv : feats) s += w[model.weight_index(fv.hash, y)] * fv.value;
      pot.emission(t, y) = s;
    }
  }
  for (Label a = 0; a < L; ++a)
    for (Label b = 0; b < L; ++b) pot.transition(a, b) = model.transition(a, b);
  if (model.mask_invalid_transitions()) {
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    const auto& scheme = model.scheme();
    for (Label a = 0; a < L; ++a)
      for (Label b = 0; b < L; ++b)
        if (!scheme.allows_transition(a, b)) pot.transition(a, b) = kNegInf;
    if (T > 0)
      for (Label y = 0; y < L; ++y)
        if (!scheme.allows_transition(-1, y)) pot.emission(0, y) = kNegInf;
  }
  return pot;
}

PotentialTable score_potentials(const CrfModel& model, const LabeledSequence& seq) {
  return score_potentials(model, model.extract(seq));
}

std::string serialize_model(const CrfModel& model) {
  nlohmann::json header;
  header["entity_types"] = model.scheme().entity_types();
  const auto& c = model.config();
  header["features"] = {{"hash_bits", c.hash_bits},
                        {"word", c.word},
                        {"lowercase", c.lowercase},
                        {"affix_length", c.affix_length},
                        {"shape", c.shape},
                        {"context", c.context},
                        {"in_embeddings", c.in_embeddings},
                        {"embedding_components", c.embedding_components}};
  header["mask_invalid_transitions"] = model.mask_invalid_transitions();
  std::string h = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kModelVersion);
  put<std::uint64_t>(out, h.size());
  out += h;
  std::uint64_t nnz = 0;
  for (double v : model.weights()) nnz += v != 0.0;
  put<std::uint64_t>(out, nnz);
  const auto& w = model.weights();
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] == 0.0) continue;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(i));
    put<double>(out, w[i]);
  }
  put<std::uint64_t>(out, model.transitions().size());
  for (double v : model.transitions()) put<double>(out, v);
  return out;
}

CrfModel deserialize_model(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic)))
    throw CorruptFileError("not a model file");
  auto version = r.get<std::uint32_t>();
  if (version != kModelVersion)
    throw VersionError("model file version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kModelVersion) + ")");
  auto hlen = r.get<std::uint64_t>();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.take(hlen));
  } catch (const nlohmann::json::exception&) {
    throw CorruptFileError("model header is not valid JSON");
  }
  FeatureConfig c;
  LabelScheme scheme;
  bool mask = false;
  try {
    const auto& f = header.at("features");
    c.hash_bits = f.at("hash_bits");
    c.word = f.at("word");
    c.lowercase = f.at("lowercase");
    c.affix_length = f.at("affix_length");
    c.shape = f.at("shape");
    c.context = f.at("context");
    c.in_embeddings = f.at("in_embeddings");
    c.embedding_components = f.at("embedding_components");
    scheme = LabelScheme(header.at("entity_types").get<std::vector<std::string>>());
    mask = header.at("mask_invalid_transitions");
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError(std::string("model header: ") + e.what());
  }
  CrfModel model(std::move(scheme), c);
  model.set_mask_invalid_transitions(mask);
  auto nnz = r.get<std::uint64_t>();
  auto& w = model.weights();
  for (std::uint64_t i = 0; i < nnz; ++i) {
    auto idx = r.get<std::uint32_t>();
    if (idx >= w.size()) throw CorruptFileError("weight index out of range");
    w[idx] = r.get<double>();
  }
  auto ntrans = r.get<std::uint64_t>();
  if (ntrans != model.transitions().size()) throw CorruptFileError("transition matrix size mismatch");
  for (auto& v : model.transitions()) v = r.get<double>();
  if (!r.done()) throw CorruptFileError("trailing bytes in model file");
  return model;
}

void save_model(const CrfModel& model, const std::string& path) { write_file(path, serialize_model(model)); }

CrfModel load_model(const std::string& path) { return deserialize_model(read_file(path)); }

}  // namespace etal
