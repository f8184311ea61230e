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

#include "etal/synthetic.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <string>

namespace etal {

namespace {

const char* const kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "st", "tr"};
const char* const kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};

// Cue words seen before entities of each type; some cues are shared.
const std::vector<std::vector<std::string>> kCues = {
    {"mr", "mrs", "said", "minister", "coach", "by"},
    {"shares", "company", "at", "firm", "by", "from"},
    {"in", "near", "from", "visited", "across"},
    {"the", "a", "new", "annual", "during"},
};
// Second tokens that some multi-token entities end with.
const std::vector<std::vector<std::string>> kTails = {
    {},
    {"Corp", "Group", "Bank", "United"},
    {"City", "River", "Bay"},
    {"Cup", "Games", "Awards"},
};

using Rng = std::mt19937_64;

std::string syllable(Rng& rng) {
  std::uniform_int_distribution<int> on(0, std::size(kOnsets) - 1), vo(0, std::size(kVowels) - 1);
  return std::string(kOnsets[on(rng)]) + kVowels[vo(rng)];
}

std::string capitalize(std::string w) {
  w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
  return w;
}

std::vector<double> zipf_weights(int n, double exponent) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = 1.0 / std::pow(i + 1.0, exponent);
  return w;
}

using Gazetteer = std::vector<std::vector<std::vector<std::string>>>;  // [type][rank] -> tokens

struct Lexicon {
  Gazetteer target;
  Gazetteer source;
  std::vector<std::string> filler;
  std::vector<std::string> distractors;
};

class WordMaker {
 public:
  explicit WordMaker(Rng& rng) : rng_(rng) {}

  // Unique word of `syllables` random syllables followed by `ending`; grows
  // longer when short forms run out.
  std::string make(int syllables, const std::string& ending, bool capital) {
    for (int tries = 1;; ++tries) {
      if (tries % 32 == 0) ++syllables;
      std::string w;
      for (int s = 0; s < syllables; ++s) w += syllable(rng_);
      w += ending;
      if (capital) w = capitalize(w);
      if (used_.insert(w).second) return w;
    }
  }

 private:
  Rng& rng_;
  std::set<std::string> used_;
};

Gazetteer build_gazetteer(Rng& rng, WordMaker& words, int types, int per_type,
                          const std::vector<std::vector<std::string>>& endings, double ending_rate) {
  std::bernoulli_distribution two(0.4), tail(0.3), typed(ending_rate);
  std::uniform_int_distribution<int> syl(1, 2), pick_ending(0, 2);
  auto name = [&](int k) {
    std::string end = !endings.empty() && typed(rng) ? endings[k][pick_ending(rng)] : syllable(rng);
    return words.make(syl(rng), end, true);
  };
  Gazetteer g(types);
  for (int k = 0; k < types; ++k) {
    for (int r = 0; r < per_type; ++r) {
      std::vector<std::string> e{name(k)};
      if (k == 0 && two(rng)) e.push_back(name(k));
      if (k > 0 && tail(rng)) {
        std::uniform_int_distribution<int> pick(0, kTails[k].size() - 1);
        e.push_back(kTails[k][pick(rng)]);
      }
      g[k].push_back(std::move(e));
    }
  }
  return g;
}

Lexicon build_lexicon(Rng& rng, int types, const SyntheticConfig& config) {
  Lexicon lex;
  WordMaker words(rng);
  std::set<std::string> endings_used;
  std::vector<std::vector<std::string>> endings(types);
  for (auto& e : endings)
    while (e.size() < 3) {
      std::string s = syllable(rng);
      if (endings_used.insert(s).second) e.push_back(s);
    }
  lex.target = build_gazetteer(rng, words, types, config.entities_per_type, endings, config.type_ending_rate);
  lex.source = build_gazetteer(rng, words, types, config.entities_per_type, {}, 0.0);
  std::uniform_int_distribution<int> syl(1, 2);
  for (int i = 0; i < 400; ++i) lex.filler.push_back(words.make(syl(rng), "", false));
  for (int i = 0; i < config.distractor_count; ++i) lex.distractors.push_back(words.make(syl(rng) + 1, "", true));
  return lex;
}

class SentenceSampler {
 public:
  SentenceSampler(const Lexicon& lex, const LabelScheme& scheme, const SyntheticConfig& config)
      : lex_(lex), scheme_(scheme), distractor_rate_(config.distractor_rate) {
    double exponent = config.zipf_exponent;
    auto fw = zipf_weights(lex.filler.size(), exponent + 0.2);
    filler_ = std::discrete_distribution<int>(fw.begin(), fw.end());
    auto ew = zipf_weights(lex.target[0].size(), exponent);
    entity_ = std::discrete_distribution<int>(ew.begin(), ew.end());
  }

  // overlap: probability that a mention uses a target name rather than a source name.
  LabeledSequence sample(Rng& rng, double overlap, double drop_rate) {
    std::uniform_int_distribution<int> len(6, 30), n_ent(0, 3), type(0, scheme_.num_types() - 1);
    std::bernoulli_distribution cue(0.6), distract(distractor_rate_), drop(drop_rate), target(overlap);
    int filler = len(rng);
    int entities = n_ent(rng);
    std::vector<int> slots;
    std::uniform_int_distribution<int> at(0, filler - 1);
    for (int e = 0; e < entities; ++e) slots.push_back(at(rng));
    std::sort(slots.begin(), slots.end());

    LabeledSequence s;
    std::size_t next_slot = 0;
    for (int i = 0; i < filler; ++i) {
      while (next_slot < slots.size() && slots[next_slot] == i) {
        ++next_slot;
        int k = type(rng);
        if (cue(rng)) {
          std::uniform_int_distribution<int> c(0, kCues[k].size() - 1);
          push(s, kCues[k][c(rng)], LabelScheme::kOutside);
        }
        const Gazetteer& g = target(rng) ? lex_.target : lex_.source;
        const auto& toks = g[k][entity_(rng)];
        bool dropped = drop(rng);
        for (std::size_t t = 0; t < toks.size(); ++t)
          push(s, toks[t], dropped ? LabelScheme::kOutside : (t == 0 ? scheme_.begin(k) : scheme_.inside(k)));
      }
      if (distract(rng)) {
        std::uniform_int_distribution<int> d(0, lex_.distractors.size() - 1);
        push(s, lex_.distractors[d(rng)], LabelScheme::kOutside);
      } else {
        const std::string& w = lex_.filler[filler_(rng)];
        push(s, s.tokens.empty() ? capitalize(w) : w, LabelScheme::kOutside);
      }
    }
    push(s, ".", LabelScheme::kOutside);
    return s;
  }

 private:
  static void push(LabeledSequence& s, const std::string& tok, Label y) {
    s.tokens.push_back(tok);
    s.labels.push_back(y);
  }

  const Lexicon& lex_;
  const LabelScheme& scheme_;
  std::discrete_distribution<int> filler_;
  std::discrete_distribution<int> entity_;
  double distractor_rate_;
};

std::vector<LabeledSequence> sample_split(SentenceSampler& sampler, Rng& rng, int n, const std::string& prefix,
                                          double overlap, double drop_rate) {
  std::vector<LabeledSequence> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    auto s = sampler.sample(rng, overlap, drop_rate);
    s.id = prefix + std::to_string(i);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticConfig& config) {
  SyntheticCorpus out;
  out.scheme = LabelScheme::conll();
  Rng rng(config.seed);
  Lexicon lex = build_lexicon(rng, out.scheme.num_types(), config);
  SentenceSampler sampler(lex, out.scheme, config);
  out.pool = sample_split(sampler, rng, config.pool_size, "pool-", 1.0, 0.0);
  out.dev = sample_split(sampler, rng, config.dev_size, "dev-", 1.0, 0.0);
  out.test = sample_split(sampler, rng, config.test_size, "test-", 1.0, 0.0);
  out.transferred =
      sample_split(sampler, rng, config.transferred_size, "xfer-", config.transfer_overlap, config.transfer_drop_rate);
  return out;
}

}  // namespace etal
