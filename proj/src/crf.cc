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

#include "etal/crf.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "etal/errors.h"

namespace etal {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// alpha[t*L + y] over allowed labels; constraints may be null.
std::vector<double> forward(const PotentialTable& pot, const PartialLabeling* c) {
  int T = pot.length(), L = pot.num_labels();
  std::vector<double> alpha(static_cast<std::size_t>(T) * L, kNegInf);
  std::vector<double> terms(L);
  for (int y = 0; y < L; ++y)
    if (!c || c->allows(0, y)) alpha[y] = pot.emission(0, y);
  for (int t = 1; t < T; ++t) {
    for (int y = 0; y < L; ++y) {
      if (c && !c->allows(t, y)) continue;
      for (int a = 0; a < L; ++a) terms[a] = alpha[(t - 1) * L + a] + pot.transition(a, y);
      alpha[t * L + y] = pot.emission(t, y) + log_sum_exp(terms);
    }
  }
  return alpha;
}

std::vector<double> backward(const PotentialTable& pot, const PartialLabeling* c) {
  int T = pot.length(), L = pot.num_labels();
  std::vector<double> beta(static_cast<std::size_t>(T) * L, kNegInf);
  std::vector<double> terms(L);
  for (int y = 0; y < L; ++y)
    if (!c || c->allows(T - 1, y)) beta[(T - 1) * L + y] = 0.0;
  for (int t = T - 2; t >= 0; --t) {
    for (int a = 0; a < L; ++a) {
      if (c && !c->allows(t, a)) continue;
      for (int b = 0; b < L; ++b)
        terms[b] = pot.transition(a, b) + pot.emission(t + 1, b) + beta[(t + 1) * L + b];
      beta[t * L + a] = log_sum_exp(terms);
    }
  }
  return beta;
}

Marginals log_space_forward_backward(const PotentialTable& pot, const PartialLabeling* c) {
  int T = pot.length(), L = pot.num_labels();
  Marginals m;
  m.length = T;
  m.num_labels = L;
  auto alpha = forward(pot, c);
  auto beta = backward(pot, c);
  m.log_z = log_sum_exp(std::span<const double>(alpha).subspan((T - 1) * L, L));
  m.token.assign(static_cast<std::size_t>(T) * L, 0.0);
  m.pairwise.assign(static_cast<std::size_t>(std::max(T - 1, 0)) * L * L, 0.0);
  if (m.log_z == kNegInf) return m;
  for (std::size_t i = 0; i < m.token.size(); ++i) {
    double v = alpha[i] + beta[i];
    m.token[i] = v == kNegInf ? 0.0 : std::exp(v - m.log_z);
  }
  for (int t = 0; t + 1 < T; ++t) {
    for (int a = 0; a < L; ++a) {
      double fa = alpha[t * L + a];
      if (fa == kNegInf) continue;
      for (int b = 0; b < L; ++b) {
        double v = fa + pot.transition(a, b) + pot.emission(t + 1, b) + beta[(t + 1) * L + b];
        m.pairwise[(static_cast<std::size_t>(t) * L + a) * L + b] =
            v == kNegInf ? 0.0 : std::exp(v - m.log_z);
      }
    }
  }
  return m;
}

// Forward-backward in probability space with per-position rescaling. Returns
// false when some scale underflows, leaving the log-space path to decide.
bool scaled_forward_backward(const PotentialTable& pot, const PartialLabeling* c, Marginals& m) {
  const int T = pot.length(), L = pot.num_labels();
  const std::size_t TL = static_cast<std::size_t>(T) * L;
  double trans_max = kNegInf;
  for (double v : pot.transitions()) trans_max = std::max(trans_max, v);
  if (!std::isfinite(trans_max)) return false;
  std::vector<double> trans(static_cast<std::size_t>(L) * L);
  for (int a = 0; a < L; ++a)
    for (int b = 0; b < L; ++b) trans[a * L + b] = std::exp(pot.transition(a, b) - trans_max);

  std::vector<double> emit(TL, 0.0), alpha(TL, 0.0), beta(TL, 0.0), scale(T);
  double log_z = 0.0;
  for (int t = 0; t < T; ++t) {
    double e_max = kNegInf;
    for (int y = 0; y < L; ++y)
      if (!c || c->allows(t, y)) e_max = std::max(e_max, pot.emission(t, y));
    if (!std::isfinite(e_max)) return false;
    for (int y = 0; y < L; ++y)
      if (!c || c->allows(t, y)) emit[t * L + y] = std::exp(pot.emission(t, y) - e_max);
    log_z += e_max + (t > 0 ? trans_max : 0.0);
  }

  for (int t = 0; t < T; ++t) {
    double* at = &alpha[t * L];
    const double* et = &emit[t * L];
    if (t == 0) {
      for (int y = 0; y < L; ++y) at[y] = et[y];
    } else {
      const double* prev = &alpha[(t - 1) * L];
      for (int a = 0; a < L; ++a) {
        if (prev[a] == 0.0) continue;
        const double* row = &trans[a * L];
        for (int y = 0; y < L; ++y) at[y] += prev[a] * row[y];
      }
      for (int y = 0; y < L; ++y) at[y] *= et[y];
    }
    double s = 0.0;
    for (int y = 0; y < L; ++y) s += at[y];
    if (!(s > 0.0) || !std::isfinite(s)) return false;
    for (int y = 0; y < L; ++y) at[y] /= s;
    scale[t] = s;
    log_z += std::log(s);
  }

  for (int y = 0; y < L; ++y) beta[(T - 1) * L + y] = 1.0;
  std::vector<double> next(L);
  for (int t = T - 2; t >= 0; --t) {
    for (int b = 0; b < L; ++b) next[b] = emit[(t + 1) * L + b] * beta[(t + 1) * L + b];
    for (int a = 0; a < L; ++a) {
      if (c && !c->allows(t, a)) continue;
      const double* row = &trans[a * L];
      double v = 0.0;
      for (int b = 0; b < L; ++b) v += row[b] * next[b];
      beta[t * L + a] = v / scale[t + 1];
    }
  }

  m.log_z = log_z;
  m.token.resize(TL);
  for (std::size_t i = 0; i < TL; ++i) m.token[i] = alpha[i] * beta[i];
  m.pairwise.assign(static_cast<std::size_t>(std::max(T - 1, 0)) * L * L, 0.0);
  for (int t = 0; t + 1 < T; ++t) {
    for (int b = 0; b < L; ++b) next[b] = emit[(t + 1) * L + b] * beta[(t + 1) * L + b] / scale[t + 1];
    for (int a = 0; a < L; ++a) {
      double fa = alpha[t * L + a];
      if (fa == 0.0) continue;
      double* out = &m.pairwise[(static_cast<std::size_t>(t) * L + a) * L];
      const double* row = &trans[a * L];
      for (int b = 0; b < L; ++b) out[b] = fa * row[b] * next[b];
    }
  }
  return true;
}

Marginals run_forward_backward(const PotentialTable& pot, const PartialLabeling* c) {
  int T = pot.length(), L = pot.num_labels();
  if (c && (c->length() != T || c->num_labels() != L))
    throw Error("constraint shape does not match potential table");
  Marginals m;
  m.length = T;
  m.num_labels = L;
  if (T == 0) return m;
  if (scaled_forward_backward(pot, c, m)) return m;
  return log_space_forward_backward(pot, c);
}

}  // namespace

double log_sum_exp(std::span<const double> values) {
  double m = kNegInf;
  for (double v : values) m = std::max(m, v);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

PartialLabeling::PartialLabeling(int length, int num_labels)
    : labels_(num_labels), allowed_(length, 0) {
  if (num_labels <= 0 || num_labels > LabelScheme::kMaxLabels)
    throw Error("label count out of range for partial labeling");
  std::fill(allowed_.begin(), allowed_.end(), full_mask());
}

PartialLabeling PartialLabeling::from_labels(std::span<const Label> labels, int num_labels) {
  PartialLabeling p(static_cast<int>(labels.size()), num_labels);
  for (std::size_t t = 0; t < labels.size(); ++t) p.pin(static_cast<int>(t), labels[t]);
  return p;
}

std::uint64_t PartialLabeling::full_mask() const {
  return labels_ == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << labels_) - 1;
}

void PartialLabeling::restrict(int t, std::uint64_t mask) {
  mask &= full_mask();
  if (mask == 0) throw Error("empty allowed-label set at position " + std::to_string(t));
  allowed_[t] = mask;
}

Label PartialLabeling::pinned(int t) const {
  std::uint64_t m = allowed_[t];
  if (m == 0 || (m & (m - 1))) return -1;
  return std::countr_zero(m);
}

bool PartialLabeling::fully_constrained() const {
  for (int t = 0; t < length(); ++t)
    if (pinned(t) < 0) return false;
  return true;
}

bool PartialLabeling::unconstrained() const {
  for (std::uint64_t m : allowed_)
    if (m != full_mask()) return false;
  return true;
}

void PartialLabeling::annotate(const AnnotatedSpan& span, const LabelScheme& scheme) {
  if (span.start < 0 || span.end > length() || span.start >= span.end)
    throw Error("annotated span out of range");
  if (span.type < 0) {
    for (int t = span.start; t < span.end; ++t) pin(t, LabelScheme::kOutside);
  } else {
    pin(span.start, scheme.begin(span.type));
    for (int t = span.start + 1; t < span.end; ++t) pin(t, scheme.inside(span.type));
  }
  provenance_.push_back(span);
}

Marginals forward_backward(const PotentialTable& pot) { return run_forward_backward(pot, nullptr); }

Marginals forward_backward(const PotentialTable& pot, const PartialLabeling& constraints) {
  return run_forward_backward(pot, &constraints);
}

double log_partition(const PotentialTable& pot) {
  if (pot.length() == 0) return 0.0;
  auto alpha = forward(pot, nullptr);
  int L = pot.num_labels();
  return log_sum_exp(std::span<const double>(alpha).subspan((pot.length() - 1) * L, L));
}

double log_partition(const PotentialTable& pot, const PartialLabeling& constraints) {
  if (pot.length() == 0) return 0.0;
  auto alpha = forward(pot, &constraints);
  int L = pot.num_labels();
  return log_sum_exp(std::span<const double>(alpha).subspan((pot.length() - 1) * L, L));
}

double log_partition_backward(const PotentialTable& pot) {
  if (pot.length() == 0) return 0.0;
  auto beta = backward(pot, nullptr);
  int L = pot.num_labels();
  std::vector<double> terms(L);
  for (int y = 0; y < L; ++y) terms[y] = pot.emission(0, y) + beta[y];
  return log_sum_exp(terms);
}

double sequence_score(const PotentialTable& pot, std::span<const Label> labels) {
  if (static_cast<int>(labels.size()) != pot.length()) throw Error("label length mismatch");
  double s = 0.0;
  for (int t = 0; t < pot.length(); ++t) {
    s += pot.emission(t, labels[t]);
    if (t > 0) s += pot.transition(labels[t - 1], labels[t]);
  }
  return s;
}

ViterbiResult viterbi(const PotentialTable& pot) {
  int T = pot.length(), L = pot.num_labels();
  ViterbiResult r;
  if (T == 0) return r;
  std::vector<double> delta(static_cast<std::size_t>(T) * L);
  std::vector<int> back(static_cast<std::size_t>(T) * L, 0);
  for (int y = 0; y < L; ++y) delta[y] = pot.emission(0, y);
  for (int t = 1; t < T; ++t) {
    for (int y = 0; y < L; ++y) {
      double best = kNegInf;
      int arg = 0;
      for (int a = 0; a < L; ++a) {
        double v = delta[(t - 1) * L + a] + pot.transition(a, y);
        if (v > best) {
          best = v;
          arg = a;
        }
      }
      delta[t * L + y] = best + pot.emission(t, y);
      back[t * L + y] = arg;
    }
  }
  double best = kNegInf;
  int arg = 0;
  for (int y = 0; y < L; ++y) {
    if (delta[(T - 1) * L + y] > best) {
      best = delta[(T - 1) * L + y];
      arg = y;
    }
  }
  r.score = best;
  r.labels.assign(T, 0);
  r.labels[T - 1] = arg;
  for (int t = T - 1; t > 0; --t) r.labels[t - 1] = back[t * L + r.labels[t]];
  return r;
}

}  // namespace etal
