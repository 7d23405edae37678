// Copyright 2026 The PopSteer Authors
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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "popsteer/types.hpp"

namespace popsteer {

// Candidate list entry for list-based rerankers; lists are ordered by score
// descending with ascending item id breaking ties.
struct ScoredCandidate {
  std::int64_t item = 0;
  double score = 0.0;
  bool tail = false;
};

// Inverse-popularity regularization: s~ = s / (1 + alpha * rho) with
// rho_i = count_i / max count. Applied to the full score vector.
inline Vector ipr_rerank(const Vector& scores, const std::vector<std::int64_t>& counts,
                         double alpha) {
  if (alpha < 0) throw UsageError("ipr_rerank: alpha must be >= 0");
  if (scores.size() != static_cast<std::int64_t>(counts.size()))
    throw DataError("ipr_rerank: scores/counts length mismatch");
  std::int64_t max_count = 0;
  for (std::int64_t c : counts) max_count = std::max(max_count, c);
  if (max_count <= 0) throw DataError("ipr_rerank: all popularity counts are zero");

  Vector adjusted(scores.size());
  const double inv_max = 1.0 / static_cast<double>(max_count);
  for (std::int64_t i = 0; i < scores.size(); ++i) {
    const double rho = static_cast<double>(counts[i]) * inv_max;
    adjusted[i] = scores[i] / (1.0 + alpha * rho);
  }
  return adjusted;
}

// Cumulative binomial probability F(m; n, p) = sum_{t=0..m} C(n,t) p^t (1-p)^(n-t).
inline double binomial_cdf(int m, int n, double p) {
  if (m < 0) return 0.0;
  if (m >= n) return 1.0;
  double term = std::pow(1.0 - p, n);  // t = 0
  double cdf = term;
  for (int t = 1; t <= m; ++t) {
    term *= (static_cast<double>(n - t + 1) / static_cast<double>(t)) * (p / (1.0 - p));
    cdf += term;
  }
  return std::min(cdf, 1.0);
}

// Minimum protected-item counts per prefix: m(i) is the smallest m with
// F(m; i, p) > alpha_sig (strict). Non-decreasing in both i and p.
inline std::vector<int> fair_min_protected_table(int k, double p, double alpha_sig) {
  if (!(p > 0.0 && p < 1.0)) throw UsageError("fair_min_protected_table: p must be in (0,1)");
  if (!(alpha_sig > 0.0 && alpha_sig < 1.0))
    throw UsageError("fair_min_protected_table: alpha_sig must be in (0,1)");
  std::vector<int> table(k + 1, 0);
  for (int i = 1; i <= k; ++i) {
    int m = 0;
    while (!(binomial_cdf(m, i, p) > alpha_sig)) ++m;
    table[i] = m;
  }
  return table;
}

struct FairResult {
  std::vector<std::int64_t> items;
  bool infeasible_relaxed = false;
};

// Greedy ranked-group-fairness reranking with tail items as the protected
// group: fill by score, but whenever a prefix would fall below m(i) protected
// items, promote the best remaining tail item. If the pool runs out of tail
// items the constraint is relaxed and the list flagged.
inline FairResult fair_rerank(const std::vector<ScoredCandidate>& candidates, double p,
                              double alpha_sig, int k) {
  if (k < 1) throw UsageError("fair_rerank: k must be >= 1");
  if (static_cast<int>(candidates.size()) < k)
    throw DataError("fair_rerank: fewer candidates than k");
  const std::vector<int> min_protected = fair_min_protected_table(k, p, alpha_sig);

  FairResult out;
  out.items.reserve(k);
  std::vector<char> used(candidates.size(), 0);
  int tail_used = 0;
  std::size_t next_any = 0;
  std::size_t next_tail = 0;
  for (int pos = 1; pos <= k; ++pos) {
    while (next_any < candidates.size() && used[next_any]) ++next_any;
    if (tail_used < min_protected[pos]) {
      while (next_tail < candidates.size() && (used[next_tail] || !candidates[next_tail].tail))
        ++next_tail;
      if (next_tail < candidates.size()) {
        used[next_tail] = 1;
        out.items.push_back(candidates[next_tail].item);
        ++tail_used;
        continue;
      }
      out.infeasible_relaxed = true;  // no tail items left; fall through
    }
    used[next_any] = 1;
    out.items.push_back(candidates[next_any].item);
    if (candidates[next_any].tail) ++tail_used;
  }
  return out;
}

// Uniform sample of k distinct items from the top-L candidates, presented in
// original score order.
inline std::vector<std::int64_t> random_rerank(const std::vector<ScoredCandidate>& candidates,
                                               int pool_size, int k, std::uint64_t seed) {
  if (k < 1) throw UsageError("random_rerank: k must be >= 1");
  if (pool_size < k) throw UsageError("random_rerank: pool size must be >= k");
  if (static_cast<int>(candidates.size()) < pool_size)
    throw DataError("random_rerank: fewer candidates than pool size");

  std::vector<std::int32_t> slots(pool_size);
  for (int i = 0; i < pool_size; ++i) slots[i] = i;
  Rng rng(seed);
  for (int i = 0; i < k; ++i)
    std::swap(slots[i], slots[i + bounded_uint(rng, static_cast<std::uint64_t>(pool_size - i))]);
  slots.resize(k);
  std::sort(slots.begin(), slots.end());

  std::vector<std::int64_t> items;
  items.reserve(k);
  for (std::int32_t s : slots) items.push_back(candidates[s].item);
  return items;
}

}  // namespace popsteer
