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
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "popsteer/backbone.hpp"
#include "popsteer/dataset.hpp"
#include "popsteer/io.hpp"
#include "popsteer/metrics.hpp"
#include "popsteer/parallel.hpp"
#include "popsteer/sae.hpp"
#include "popsteer/types.hpp"

namespace popsteer {

// Per-neuron activation statistics over the popular / unpopular synthetic
// profile populations. d == 0 marks a neuron without usable contrast
// (including the degenerate pooled-sigma-zero case); such neurons are
// ineligible for steering selection.
struct NeuronStats {
  Vector mu_pop, sigma_pop, mu_unpop, sigma_unpop;
  Vector d;
  Vector sigma_pooled;
  std::int64_t n_pop = 0;
  std::int64_t n_unpop = 0;

  std::int64_t width() const { return d.size(); }
  bool eligible(std::int64_t j) const { return d[j] != 0.0; }
};

// Standardized mean difference with pooled standard deviation
// sqrt((sigma_pop^2 + sigma_unpop^2) / 2); zero pooled sigma maps to 0.
inline double cohens_d(double mu_pop, double sigma_pop, double mu_unpop, double sigma_unpop) {
  const double pooled = std::sqrt((sigma_pop * sigma_pop + sigma_unpop * sigma_unpop) / 2.0);
  if (pooled == 0.0) return 0.0;
  return (mu_pop - mu_unpop) / pooled;
}

// Groups log events into one item sequence per user, preserving event order.
inline std::vector<std::vector<std::int64_t>> profiles_by_user(const InteractionLog& log) {
  std::vector<std::vector<std::int64_t>> profiles(log.num_users);
  for (const Interaction& e : log.events) profiles[e.user].push_back(e.item);
  return profiles;
}

namespace detail {

// Population accumulator over post-top-K activations; user-level work is
// split into fixed blocks and merged in block order, so the result does not
// depend on the thread count.
inline WelfordAccumulator accumulate_activations(const SaeModel& sae,
                                                 const BackboneModel& backbone,
                                                 const InteractionLog& log, int threads) {
  const auto profiles = profiles_by_user(log);
  if (profiles.empty()) throw DataError("collect_activation_stats: empty population");
  const std::int64_t n = static_cast<std::int64_t>(profiles.size());

  std::vector<WelfordAccumulator> partial(num_blocks(n), WelfordAccumulator(sae.N));
  parallel_blocks(n, threads, [&](std::int64_t block, std::int64_t begin, std::int64_t end) {
    for (std::int64_t u = begin; u < end; ++u) {
      if (profiles[u].empty())
        throw DataError("collect_activation_stats: user " + std::to_string(u) +
                        " has an empty profile");
      const Vector x = backbone.user_embedding(profiles[u]);
      partial[block].add(to_dense(encode(sae, x)));
    }
  });

  WelfordAccumulator acc(sae.N);
  for (const WelfordAccumulator& p : partial) acc.merge(p);
  return acc;
}

}  // namespace detail

// Encodes every user's full synthetic profile and accumulates per-neuron
// mean / population standard deviation separately for the two populations,
// then derives Cohen's d per neuron.
inline NeuronStats collect_activation_stats(const SaeModel& sae, const BackboneModel& backbone,
                                            const InteractionLog& profiles_pop,
                                            const InteractionLog& profiles_unpop,
                                            int threads = 1) {
  if (profiles_pop.num_users != profiles_unpop.num_users)
    throw DataError("collect_activation_stats: population user sets differ");
  const WelfordAccumulator pop =
      detail::accumulate_activations(sae, backbone, profiles_pop, threads);
  const WelfordAccumulator unpop =
      detail::accumulate_activations(sae, backbone, profiles_unpop, threads);

  NeuronStats stats;
  stats.n_pop = pop.count;
  stats.n_unpop = unpop.count;
  stats.mu_pop = pop.mean;
  stats.mu_unpop = unpop.mean;
  stats.sigma_pop = pop.variance().cwiseSqrt();
  stats.sigma_unpop = unpop.variance().cwiseSqrt();
  stats.d.resize(sae.N);
  stats.sigma_pooled.resize(sae.N);
  for (std::int64_t j = 0; j < sae.N; ++j) {
    stats.sigma_pooled[j] = std::sqrt(
        (stats.sigma_pop[j] * stats.sigma_pop[j] + stats.sigma_unpop[j] * stats.sigma_unpop[j]) /
        2.0);
    stats.d[j] = cohens_d(stats.mu_pop[j], stats.sigma_pop[j], stats.mu_unpop[j],
                          stats.sigma_unpop[j]);
  }
  return stats;
}

enum class SteerDirection : std::uint8_t { Boost, Suppress };

struct PlanEntry {
  std::int32_t neuron = 0;
  double w = 0.0;
  SteerDirection direction = SteerDirection::Boost;
  double sigma = 0.0;
};

struct SteeringPlan {
  std::vector<PlanEntry> entries;  // sorted by neuron id
  std::int64_t width = 0;
  double alpha = 0.0;
};

// Neurons ranked by |d| descending (ties: ascending id), neurons with d == 0
// skipped; at most n ids returned.
inline std::vector<std::int32_t> select_top_neurons(const NeuronStats& stats, std::int64_t n) {
  std::vector<std::int32_t> ids;
  for (std::int64_t j = 0; j < stats.width(); ++j)
    if (stats.eligible(j)) ids.push_back(static_cast<std::int32_t>(j));
  std::sort(ids.begin(), ids.end(), [&](std::int32_t a, std::int32_t b) {
    const double da = std::abs(stats.d[a]);
    const double db = std::abs(stats.d[b]);
    if (da != db) return da > db;
    return a < b;
  });
  if (static_cast<std::int64_t>(ids.size()) > n) ids.resize(n);
  return ids;
}

// Weights follow a min-max rescaling of |d| over ALL neurons:
//   w_j = alpha * (|d_j| - min|d|) / (max|d| - min|d|)
// so the globally strongest neuron gets w = alpha. Boost when d < 0 (neuron
// tracks unpopular taste), suppress when d > 0. If fewer than n_select
// neurons are eligible, the plan takes all eligible ones.
inline SteeringPlan build_steering_plan(const NeuronStats& stats, double alpha,
                                        std::int64_t n_select) {
  if (alpha < 0) throw UsageError("build_steering_plan: alpha must be >= 0");
  if (n_select < 0 || n_select > stats.width())
    throw UsageError("build_steering_plan: n_select out of range");

  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (std::int64_t j = 0; j < stats.width(); ++j) {
    const double a = std::abs(stats.d[j]);
    lo = std::min(lo, a);
    hi = std::max(hi, a);
  }
  if (!(hi > lo)) throw NumericError("build_steering_plan: normalization undefined");

  SteeringPlan plan;
  plan.width = stats.width();
  plan.alpha = alpha;
  std::vector<std::int32_t> ids = select_top_neurons(stats, n_select);
  std::sort(ids.begin(), ids.end());
  plan.entries.reserve(ids.size());
  for (std::int32_t j : ids) {
    PlanEntry e;
    e.neuron = j;
    e.w = alpha * (std::abs(stats.d[j]) - lo) / (hi - lo);
    e.direction = stats.d[j] < 0 ? SteerDirection::Boost : SteerDirection::Suppress;
    e.sigma = stats.sigma_pooled[j];
    plan.entries.push_back(e);
  }
  return plan;
}

// Boost: a'_j = a_j + w_j * sigma_j. Suppress: a'_j = max(0, a_j - w_j *
// sigma_j). Boosting can activate neurons the top-K mask zeroed, so the
// result may carry more than K nonzeros.
inline SparseActivation steer(const SparseActivation& a, const SteeringPlan& plan) {
  if (plan.width != a.width) throw DataError("steer: width mismatch");
  Vector dense = to_dense(a);
  for (const PlanEntry& e : plan.entries) {
    if (e.direction == SteerDirection::Boost)
      dense[e.neuron] += e.w * e.sigma;
    else
      dense[e.neuron] = std::max(0.0, dense[e.neuron] - e.w * e.sigma);
  }
  SparseActivation out;
  out.width = a.width;
  for (std::int64_t j = 0; j < a.width; ++j)
    if (dense[j] > 0.0) {
      out.indices.push_back(static_cast<std::int32_t>(j));
      out.values.push_back(dense[j]);
    }
  return out;
}

inline Vector steered_user_embedding(const SaeModel& sae, const SteeringPlan& plan,
                                     const Vector& x) {
  return decode(sae, steer(encode(sae, x), plan));
}

enum class NoiseSelect : std::uint8_t { Matched, Random };

// Gaussian perturbation baseline: disturbs n_select neurons (by default the
// same top-|d| set steering would pick) with N(0, xi^2) noise, clamped at 0.
// In Random mode the neuron subset itself is drawn from the seed before the
// noise draws.
inline SparseActivation noise_ablation(const SparseActivation& a, std::int64_t n_select,
                                       double xi, std::uint64_t seed, const NeuronStats& stats,
                                       NoiseSelect select = NoiseSelect::Matched) {
  if (xi < 0) throw UsageError("noise_ablation: xi must be >= 0");
  if (stats.width() != a.width) throw DataError("noise_ablation: width mismatch");

  Rng rng(seed);
  std::vector<std::int32_t> ids;
  if (select == NoiseSelect::Matched) {
    ids = select_top_neurons(stats, n_select);
  } else {
    std::vector<std::int32_t> all(a.width);
    for (std::int64_t j = 0; j < a.width; ++j) all[j] = static_cast<std::int32_t>(j);
    const std::int64_t take = std::min<std::int64_t>(n_select, a.width);
    for (std::int64_t i = 0; i < take; ++i)
      std::swap(all[i], all[i + bounded_uint(rng, static_cast<std::uint64_t>(a.width - i))]);
    all.resize(take);
    ids = std::move(all);
  }
  std::sort(ids.begin(), ids.end());

  Vector dense = to_dense(a);
  for (std::int32_t j : ids) dense[j] = std::max(0.0, dense[j] + xi * gaussian(rng));

  SparseActivation out;
  out.width = a.width;
  for (std::int64_t j = 0; j < a.width; ++j)
    if (dense[j] > 0.0) {
      out.indices.push_back(static_cast<std::int32_t>(j));
      out.values.push_back(dense[j]);
    }
  return out;
}

enum class DeactivationSide : std::uint8_t { Popular, Unpopular };

// Neurons whose Cohen's d clears the threshold on the requested side, ranked
// by |d| descending (ties: ascending id).
inline std::vector<std::int32_t> qualifying_neurons(const NeuronStats& stats,
                                                    double threshold, DeactivationSide side) {
  std::vector<std::int32_t> ids;
  for (std::int64_t j = 0; j < stats.width(); ++j) {
    const bool hit = side == DeactivationSide::Popular ? stats.d[j] > threshold
                                                       : stats.d[j] < -threshold;
    if (hit) ids.push_back(static_cast<std::int32_t>(j));
  }
  std::sort(ids.begin(), ids.end(), [&](std::int32_t a, std::int32_t b) {
    const double da = std::abs(stats.d[a]);
    const double db = std::abs(stats.d[b]);
    if (da != db) return da > db;
    return a < b;
  });
  return ids;
}

inline SparseActivation deactivate(const SparseActivation& a,
                                   const std::vector<std::int32_t>& neurons) {
  SparseActivation out;
  out.width = a.width;
  for (std::size_t i = 0; i < a.indices.size(); ++i) {
    if (std::find(neurons.begin(), neurons.end(), a.indices[i]) == neurons.end()) {
      out.indices.push_back(a.indices[i]);
      out.values.push_back(a.values[i]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence (TSV artifacts).
// ---------------------------------------------------------------------------

inline void save_neuron_stats(const NeuronStats& stats, const std::string& path,
                              std::uint64_t config_hash) {
  std::ofstream out = open_artifact(path, "neuron_stats", config_hash);
  out << "neuron_id\tmu_pop\tsigma_pop\tmu_unpop\tsigma_unpop\tcohens_d\tsigma_pooled\n";
  for (std::int64_t j = 0; j < stats.width(); ++j) {
    out << j << '\t' << fmt_exact(stats.mu_pop[j]) << '\t' << fmt_exact(stats.sigma_pop[j])
        << '\t' << fmt_exact(stats.mu_unpop[j]) << '\t' << fmt_exact(stats.sigma_unpop[j])
        << '\t' << fmt_exact(stats.d[j]) << '\t' << fmt_exact(stats.sigma_pooled[j]) << '\n';
  }
  if (!out) throw DataError("save_neuron_stats: write failed: " + path);
}

inline NeuronStats load_neuron_stats(const std::string& path) {
  std::ifstream in(path);
  expect_artifact(in, "neuron_stats", path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("load_neuron_stats: missing header: " + path);

  std::vector<std::array<double, 6>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::int64_t id;
    std::array<double, 6> v{};
    if (!(ss >> id >> v[0] >> v[1] >> v[2] >> v[3] >> v[4] >> v[5]))
      throw DataError("load_neuron_stats: malformed row in " + path);
    if (id != static_cast<std::int64_t>(rows.size()))
      throw DataError("load_neuron_stats: non-contiguous neuron ids in " + path);
    rows.push_back(v);
  }
  if (rows.empty()) throw DataError("load_neuron_stats: no rows in " + path);

  NeuronStats stats;
  const std::int64_t n = static_cast<std::int64_t>(rows.size());
  stats.mu_pop.resize(n);
  stats.sigma_pop.resize(n);
  stats.mu_unpop.resize(n);
  stats.sigma_unpop.resize(n);
  stats.d.resize(n);
  stats.sigma_pooled.resize(n);
  for (std::int64_t j = 0; j < n; ++j) {
    stats.mu_pop[j] = rows[j][0];
    stats.sigma_pop[j] = rows[j][1];
    stats.mu_unpop[j] = rows[j][2];
    stats.sigma_unpop[j] = rows[j][3];
    stats.d[j] = rows[j][4];
    stats.sigma_pooled[j] = rows[j][5];
  }
  return stats;
}

inline void save_steering_plan(const SteeringPlan& plan, const std::string& path,
                               std::uint64_t config_hash) {
  std::ofstream out = open_artifact(path, "steering_plan", config_hash);
  out << "neuron_id\tw\tdirection\tsigma\n";
  for (const PlanEntry& e : plan.entries) {
    out << e.neuron << '\t' << fmt_exact(e.w) << '\t'
        << (e.direction == SteerDirection::Boost ? "boost" : "suppress") << '\t'
        << fmt_exact(e.sigma) << '\n';
  }
  if (!out) throw DataError("save_steering_plan: write failed: " + path);
}

}  // namespace popsteer
