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

#include "popsteer/dataset.hpp"
#include "popsteer/types.hpp"

namespace popsteer {

// Leave-one-out nDCG: a single relevant item, so IDCG = 1 and the score is
// 1/log2(rank+1) when the target sits at 1-based rank <= k, else 0.
inline double ndcg_at_k(const std::vector<std::int64_t>& reclist, std::int64_t target, int k) {
  const int limit = std::min<int>(k, static_cast<int>(reclist.size()));
  for (int r = 0; r < limit; ++r)
    if (reclist[r] == target) return 1.0 / std::log2(static_cast<double>(r + 2));
  return 0.0;
}

// Fraction of recommended slots filled by tail items.
inline double lt_coverage(const std::vector<std::vector<std::int64_t>>& reclists,
                          const PopularityPartition& partition, int k) {
  if (reclists.empty()) return 0.0;
  std::int64_t tail_slots = 0;
  for (const auto& list : reclists) {
    if (static_cast<int>(list.size()) != k)
      throw DataError("lt_coverage: list length != k");
    for (std::int64_t item : list)
      if (partition.is_tail(item)) ++tail_slots;
  }
  return static_cast<double>(tail_slots) /
         (static_cast<double>(reclists.size()) * static_cast<double>(k));
}

// Alternative normalization: distinct tail items recommended over |tail|.
inline double lt_distinct_coverage(const std::vector<std::vector<std::int64_t>>& reclists,
                                   const PopularityPartition& partition) {
  if (partition.tail_items.empty()) return 0.0;
  std::vector<char> seen(partition.label.size(), 0);
  std::int64_t distinct = 0;
  for (const auto& list : reclists)
    for (std::int64_t item : list)
      if (partition.is_tail(item) && !seen[item]) {
        seen[item] = 1;
        ++distinct;
      }
  return static_cast<double>(distinct) / static_cast<double>(partition.tail_items.size());
}

inline std::vector<std::int64_t> exposure_counts(
    const std::vector<std::vector<std::int64_t>>& reclists, std::int64_t num_items) {
  std::vector<std::int64_t> exposure(num_items, 0);
  for (const auto& list : reclists)
    for (std::int64_t item : list) ++exposure[item];
  return exposure;
}

// Gini of an exposure vector, zero-exposure entries included:
//   G = sum_i (2i - m - 1) x_(i) / (m sum(x)),   x_(i) ascending, i 1-based.
inline double gini_from_exposure(std::vector<double> x) {
  const std::int64_t m = static_cast<std::int64_t>(x.size());
  if (m < 2) throw DataError("gini: need at least 2 items");
  std::sort(x.begin(), x.end());
  double total = 0.0, weighted = 0.0;
  for (std::int64_t i = 0; i < m; ++i) {
    total += x[i];
    weighted += static_cast<double>(2 * (i + 1) - m - 1) * x[i];
  }
  if (total <= 0.0) throw DataError("gini: total exposure is zero");
  return weighted / (static_cast<double>(m) * total);
}

inline double gini_index(const std::vector<std::vector<std::int64_t>>& reclists,
                         std::int64_t num_items, int k) {
  for (const auto& list : reclists)
    if (static_cast<int>(list.size()) != k)
      throw DataError("gini_index: list length != k");
  const auto counts = exposure_counts(reclists, num_items);
  return gini_from_exposure(std::vector<double>(counts.begin(), counts.end()));
}

// Streaming mean/variance (count, mean, M2) that merges deterministically,
// so per-user work can be accumulated block-by-block in a fixed order.
struct WelfordAccumulator {
  std::int64_t count = 0;
  Vector mean;
  Vector m2;

  explicit WelfordAccumulator(std::int64_t width = 0)
      : mean(Vector::Zero(width)), m2(Vector::Zero(width)) {}

  void add(const Vector& x) {
    ++count;
    const Vector delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta.cwiseProduct(x - mean);
  }

  void merge(const WelfordAccumulator& other) {
    if (other.count == 0) return;
    if (count == 0) {
      *this = other;
      return;
    }
    const std::int64_t n = count + other.count;
    const Vector delta = other.mean - mean;
    const double w = static_cast<double>(other.count) / static_cast<double>(n);
    m2 += other.m2 + delta.cwiseProduct(delta) *
                         (static_cast<double>(count) * w);
    mean += delta * w;
    count = n;
  }

  // Population variance (divisor n).
  Vector variance() const {
    if (count == 0) return Vector::Zero(mean.size());
    return m2 / static_cast<double>(count);
  }
};

}  // namespace popsteer
