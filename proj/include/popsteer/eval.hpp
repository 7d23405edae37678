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
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "popsteer/backbone.hpp"
#include "popsteer/dataset.hpp"
#include "popsteer/metrics.hpp"
#include "popsteer/parallel.hpp"
#include "popsteer/rerank.hpp"
#include "popsteer/sae.hpp"
#include "popsteer/steering.hpp"
#include "popsteer/types.hpp"

namespace popsteer {

// One fully configured recommendation path. Model and list-shaping choices
// are mutually exclusive by construction of `kind`; the remaining fields are
// read only by the matching kind.
struct RecPath {
  enum class Kind : std::uint8_t {
    Raw,            // backbone scores
    Reconstruction, // decode(encode(x))
    Steered,        // decode(steer(encode(x), plan))
    Noise,          // decode(noise_ablation(encode(x)))
    Deactivated,    // decode(encode(x) with fixed neurons zeroed)
    Ipr,            // raw scores reweighted by inverse popularity
    Fair,           // ranked-group-fairness reranking of raw top candidates
    Random          // random sample from raw top candidates
  };

  Kind kind = Kind::Raw;
  const SaeModel* sae = nullptr;
  const SteeringPlan* plan = nullptr;
  const NeuronStats* stats = nullptr;
  std::vector<std::int32_t> deactivate_ids;
  std::int64_t noise_n = 0;
  double noise_xi = 0.0;
  std::uint64_t noise_seed = 0;
  NoiseSelect noise_select = NoiseSelect::Matched;
  double ipr_alpha = 0.0;
  double fair_p = 0.5;
  double fair_alpha_sig = 0.1;
  int fair_pool = 500;
  int random_pool = 100;
  std::uint64_t random_seed = 0;

  void validate() const {
    const bool needs_sae = kind == Kind::Reconstruction || kind == Kind::Steered ||
                           kind == Kind::Noise || kind == Kind::Deactivated;
    if (needs_sae && sae == nullptr) throw UsageError("RecPath: path requires an SAE model");
    if (kind == Kind::Steered && plan == nullptr)
      throw UsageError("RecPath: steered path requires a steering plan");
    if (kind == Kind::Noise && stats == nullptr)
      throw UsageError("RecPath: noise path requires neuron statistics");
  }
};

struct IprSpec {
  double alpha = 0.5;
};
struct FairSpec {
  double p = 0.5;
  double alpha_sig = 0.1;
  int pool = 500;
};
struct RandomSpec {
  int pool = 100;
  std::uint64_t seed = 0;
};

struct RerankSpec {
  enum class Kind : std::uint8_t { Ipr, Fair, Random };
  Kind kind = Kind::Ipr;
  IprSpec ipr;
  FairSpec fair;
  RandomSpec random;
};

// Mirrors the optional-argument pipeline configuration: a steering plan and a
// reranker together are contradictory, and a plan implies an SAE.
inline RecPath make_rec_path(const SaeModel* sae, const SteeringPlan* plan,
                             const RerankSpec* rerank) {
  if (plan != nullptr && rerank != nullptr)
    throw UsageError("conflicting configuration: steering plan and reranker both set");
  RecPath path;
  if (plan != nullptr) {
    if (sae == nullptr) throw UsageError("steering plan requires an SAE model");
    path.kind = RecPath::Kind::Steered;
    path.sae = sae;
    path.plan = plan;
  } else if (rerank != nullptr) {
    switch (rerank->kind) {
      case RerankSpec::Kind::Ipr:
        path.kind = RecPath::Kind::Ipr;
        path.ipr_alpha = rerank->ipr.alpha;
        break;
      case RerankSpec::Kind::Fair:
        path.kind = RecPath::Kind::Fair;
        path.fair_p = rerank->fair.p;
        path.fair_alpha_sig = rerank->fair.alpha_sig;
        path.fair_pool = rerank->fair.pool;
        break;
      case RerankSpec::Kind::Random:
        path.kind = RecPath::Kind::Random;
        path.random_pool = rerank->random.pool;
        path.random_seed = rerank->random.seed;
        break;
    }
  } else if (sae != nullptr) {
    path.kind = RecPath::Kind::Reconstruction;
    path.sae = sae;
  }
  path.validate();
  return path;
}

struct UserRecommendation {
  std::vector<std::int64_t> items;
  bool fair_infeasible = false;
};

// Top-k recommendations for one user under the configured path. Items from
// the user's training history are excluded from every candidate pool.
inline UserRecommendation recommend_for_user(const BackboneModel& backbone, const RecPath& path,
                                             const std::vector<std::int64_t>& train_history,
                                             const PopularityPartition& partition, int k,
                                             std::int64_t user_index) {
  const Vector x = backbone.user_embedding(train_history);
  std::vector<char> exclude(backbone.num_items(), 0);
  for (std::int64_t item : train_history) exclude[item] = 1;

  UserRecommendation rec;
  switch (path.kind) {
    case RecPath::Kind::Raw: {
      rec.items = topk(backbone.score_all(x), k, exclude);
      break;
    }
    case RecPath::Kind::Reconstruction: {
      rec.items = topk(backbone.score_all(reconstruct(*path.sae, x)), k, exclude);
      break;
    }
    case RecPath::Kind::Steered: {
      rec.items = topk(backbone.score_all(steered_user_embedding(*path.sae, *path.plan, x)), k,
                       exclude);
      break;
    }
    case RecPath::Kind::Noise: {
      const SparseActivation noisy =
          noise_ablation(encode(*path.sae, x), path.noise_n, path.noise_xi,
                         derive_seed(path.noise_seed, static_cast<std::uint64_t>(user_index)),
                         *path.stats, path.noise_select);
      rec.items = topk(backbone.score_all(decode(*path.sae, noisy)), k, exclude);
      break;
    }
    case RecPath::Kind::Deactivated: {
      const SparseActivation cut = deactivate(encode(*path.sae, x), path.deactivate_ids);
      rec.items = topk(backbone.score_all(decode(*path.sae, cut)), k, exclude);
      break;
    }
    case RecPath::Kind::Ipr: {
      const Vector adjusted = ipr_rerank(backbone.score_all(x), partition.counts, path.ipr_alpha);
      rec.items = topk(adjusted, k, exclude);
      break;
    }
    case RecPath::Kind::Fair: {
      const Vector scores = backbone.score_all(x);
      std::int64_t available = 0;
      for (char e : exclude) available += e ? 0 : 1;
      const int pool = static_cast<int>(
          std::min<std::int64_t>(path.fair_pool, available));
      const auto pool_items = topk(scores, pool, exclude);
      std::vector<ScoredCandidate> candidates;
      candidates.reserve(pool_items.size());
      for (std::int64_t item : pool_items)
        candidates.push_back({item, scores[item], partition.is_tail(item)});
      const FairResult fair = fair_rerank(candidates, path.fair_p, path.fair_alpha_sig, k);
      rec.items = fair.items;
      rec.fair_infeasible = fair.infeasible_relaxed;
      break;
    }
    case RecPath::Kind::Random: {
      const Vector scores = backbone.score_all(x);
      const auto pool_items = topk(scores, path.random_pool, exclude);
      std::vector<ScoredCandidate> candidates;
      candidates.reserve(pool_items.size());
      for (std::int64_t item : pool_items)
        candidates.push_back({item, scores[item], partition.is_tail(item)});
      rec.items = random_rerank(
          candidates, path.random_pool, k,
          derive_seed(path.random_seed, static_cast<std::uint64_t>(user_index)));
      break;
    }
  }
  return rec;
}

struct EvalReport {
  double ndcg = 0.0;
  double lt_coverage = 0.0;
  double gini = 0.0;
  std::int64_t users_evaluated = 0;
  bool fair_infeasible_any = false;
  std::vector<int> hit_rank;                       // per user, 1-based; 0 = miss
  std::vector<double> exposure;                    // per item, top-k slot counts
  std::vector<std::vector<std::int64_t>> lists;    // per user top-k
};

// Evaluates the configured path on every test user: embed from the training
// history, score, exclude seen items, take top-k, judge against the held-out
// test item, and aggregate nDCG / long-tail coverage / Gini.
inline EvalReport evaluate_pipeline(const BackboneModel& backbone, const RecPath& path,
                                    const SplitBundle& split,
                                    const PopularityPartition& partition, int k = 10,
                                    int threads = 1) {
  path.validate();
  if (split.num_users == 0) throw DataError("evaluate_pipeline: empty split");

  EvalReport report;
  report.lists.resize(split.num_users);
  report.hit_rank.assign(split.num_users, 0);
  std::vector<char> infeasible(split.num_users, 0);

  parallel_blocks(split.num_users, threads,
                  [&](std::int64_t, std::int64_t begin, std::int64_t end) {
                    for (std::int64_t u = begin; u < end; ++u) {
                      UserRecommendation rec = recommend_for_user(
                          backbone, path, split.train_items[u], partition, k, u);
                      for (std::size_t pos = 0; pos < rec.items.size(); ++pos)
                        if (rec.items[pos] == split.test_item[u])
                          report.hit_rank[u] = static_cast<int>(pos + 1);
                      report.lists[u] = std::move(rec.items);
                      infeasible[u] = rec.fair_infeasible ? 1 : 0;
                    }
                  });

  report.users_evaluated = split.num_users;
  double ndcg_sum = 0.0;
  for (std::int64_t u = 0; u < split.num_users; ++u) {
    ndcg_sum += report.hit_rank[u] > 0
                    ? 1.0 / std::log2(static_cast<double>(report.hit_rank[u]) + 1.0)
                    : 0.0;
    report.fair_infeasible_any = report.fair_infeasible_any || infeasible[u];
  }
  report.ndcg = ndcg_sum / static_cast<double>(split.num_users);
  report.lt_coverage = lt_coverage(report.lists, partition, k);
  const std::vector<std::int64_t> counts = exposure_counts(report.lists, split.num_items);
  report.exposure.assign(counts.begin(), counts.end());
  report.gini = gini_from_exposure(report.exposure);
  return report;
}

// Deactivation sweep: for each K' in the grid, zero the K' strongest
// qualifying neurons in every test encoding and record the resulting Gini.
inline std::vector<std::pair<int, double>> deactivation_study(
    const SaeModel& sae, const BackboneModel& backbone, const NeuronStats& stats,
    const SplitBundle& split, const PopularityPartition& partition, double threshold,
    const std::vector<int>& kprime_grid, DeactivationSide side, int k = 10, int threads = 1) {
  const std::vector<std::int32_t> ranked = qualifying_neurons(stats, threshold, side);
  if (ranked.empty()) throw DataError("deactivation_study: no qualifying neurons");
  for (int kprime : kprime_grid)
    if (kprime < 0 || kprime > static_cast<int>(ranked.size()))
      throw UsageError("deactivation_study: K' = " + std::to_string(kprime) +
                       " exceeds the " + std::to_string(ranked.size()) +
                       " qualifying neurons");

  std::vector<std::pair<int, double>> table;
  table.reserve(kprime_grid.size());
  for (int kprime : kprime_grid) {
    RecPath path;
    path.kind = RecPath::Kind::Deactivated;
    path.sae = &sae;
    path.deactivate_ids.assign(ranked.begin(), ranked.begin() + kprime);
    const EvalReport report = evaluate_pipeline(backbone, path, split, partition, k, threads);
    table.emplace_back(kprime, report.gini);
  }
  return table;
}

}  // namespace popsteer
