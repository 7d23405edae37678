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
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "popsteer/dataset.hpp"
#include "popsteer/io.hpp"
#include "popsteer/metrics.hpp"
#include "popsteer/types.hpp"

namespace popsteer {

struct BackboneConfig {
  int dim = 64;
  double decay = 0.8;
  int max_history = 50;
  double learning_rate = 0.05;
  int epochs = 30;
  int negatives = 1;  // negatives per positive
  int patience = 10;
  std::uint64_t seed = 1;
};

// Sequential recommender: an item-embedding table plus an exponentially
// decayed sum over the most recent items as the user embedding. Scores are
// plain dot products, so any embedding-producing backbone can slot in behind
// the same interface.
class BackboneModel {
public:
  BackboneModel() = default;
  BackboneModel(RowMatrix embeddings, double decay, int max_history,
                std::string idmap_ref = {})
      : item_embeddings_(std::move(embeddings)),
        decay_(decay),
        max_history_(max_history),
        idmap_ref_(std::move(idmap_ref)) {}

  std::int64_t num_items() const { return item_embeddings_.rows(); }
  int dim() const { return static_cast<int>(item_embeddings_.cols()); }
  double decay() const { return decay_; }
  int max_history() const { return max_history_; }
  const RowMatrix& item_embeddings() const { return item_embeddings_; }
  RowMatrix& mutable_item_embeddings() { return item_embeddings_; }
  const std::string& idmap_ref() const { return idmap_ref_; }

  // x = sum_{l=1..min(L,|h|)} decay^(l-1) * e_{h[-l]}; most recent item
  // carries weight 1.
  Vector user_embedding(const std::vector<std::int64_t>& history) const {
    if (history.empty()) throw DataError("user_embedding: empty history");
    Vector x = Vector::Zero(dim());
    const int span = std::min<std::int64_t>(max_history_, history.size());
    double w = 1.0;
    for (int l = 1; l <= span; ++l) {
      const std::int64_t item = history[history.size() - l];
      if (item < 0 || item >= num_items())
        throw DataError("user_embedding: unknown item id " + std::to_string(item));
      x += w * item_embeddings_.row(item).transpose();
      w *= decay_;
    }
    return x;
  }

  Vector score_all(const Vector& x) const {
    if (x.size() != dim()) throw DataError("score_all: dimension mismatch");
    return item_embeddings_ * x;
  }

private:
  RowMatrix item_embeddings_;  // m x d
  double decay_ = 0.8;
  int max_history_ = 50;
  std::string idmap_ref_;
};

// Top-k by score, ties broken by ascending item id; excluded items are
// skipped entirely.
inline std::vector<std::int64_t> topk(const Vector& scores, int k,
                                      const std::vector<char>& exclude) {
  if (k < 1) throw UsageError("topk: k must be >= 1");
  const std::int64_t m = scores.size();
  std::vector<std::int64_t> candidates;
  candidates.reserve(m);
  for (std::int64_t i = 0; i < m; ++i)
    if (exclude.empty() || !exclude[i]) candidates.push_back(i);
  if (static_cast<int>(candidates.size()) < k)
    throw DataError("topk: fewer than k candidates after exclusion");
  std::partial_sort(candidates.begin(), candidates.begin() + k, candidates.end(),
                    [&](std::int64_t a, std::int64_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  candidates.resize(k);
  return candidates;
}

inline std::vector<std::int64_t> topk(const Vector& scores, int k,
                                      const std::unordered_set<std::int64_t>& exclude) {
  std::vector<char> mask(scores.size(), 0);
  for (std::int64_t i : exclude)
    if (i >= 0 && i < scores.size()) mask[i] = 1;
  return topk(scores, k, mask);
}

// Pairwise logistic (BPR) loss for one (prefix, positive, negative) triple.
inline double bpr_loss(const BackboneModel& model, const std::vector<std::int64_t>& prefix,
                       std::int64_t pos, std::int64_t neg) {
  const Vector x = model.user_embedding(prefix);
  const double margin = x.dot(model.item_embeddings().row(pos).transpose() -
                              model.item_embeddings().row(neg).transpose());
  // -log sigmoid(margin), computed stably
  return margin >= 0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
}

// Accumulated per-item gradient of bpr_loss. Gradients flow into the
// positive, the negative, and every prefix item through the decayed sum.
struct BprGradients {
  double loss = 0.0;
  std::vector<std::pair<std::int64_t, Vector>> by_item;
};

inline BprGradients bpr_gradients(const BackboneModel& model,
                                  const std::vector<std::int64_t>& prefix, std::int64_t pos,
                                  std::int64_t neg) {
  const auto& emb = model.item_embeddings();
  const Vector x = model.user_embedding(prefix);
  const Vector diff = emb.row(pos).transpose() - emb.row(neg).transpose();
  const double margin = x.dot(diff);
  const double sig = 1.0 / (1.0 + std::exp(-margin));
  const double g = sig - 1.0;  // d(-log sigmoid)/d(margin)

  BprGradients out;
  out.loss = margin >= 0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
  out.by_item.emplace_back(pos, Vector(g * x));
  out.by_item.emplace_back(neg, Vector(-g * x));
  const Vector dx = g * diff;
  const int span = std::min<std::int64_t>(model.max_history(), prefix.size());
  double w = 1.0;
  for (int l = 1; l <= span; ++l) {
    out.by_item.emplace_back(prefix[prefix.size() - l], Vector(w * dx));
    w *= model.decay();
  }
  return out;
}

namespace detail {

inline double validation_ndcg(const BackboneModel& model, const SplitBundle& split, int k = 10) {
  double sum = 0.0;
  std::int64_t evaluated = 0;
  for (std::int64_t u = 0; u < split.num_users; ++u) {
    const auto& hist = split.train_items[u];
    if (hist.empty()) continue;
    const Vector x = model.user_embedding(hist);
    const Vector scores = model.score_all(x);
    std::vector<char> exclude(split.num_items, 0);
    for (std::int64_t item : hist) exclude[item] = 1;
    const auto list = topk(scores, k, exclude);
    sum += ndcg_at_k(list, split.valid_item[u], k);
    ++evaluated;
  }
  return evaluated > 0 ? sum / static_cast<double>(evaluated) : 0.0;
}

}  // namespace detail

// SGD on the BPR objective over (prefix, next item, sampled negative)
// triples, with early stopping on validation nDCG@10. Returns the snapshot
// that scored best on validation. Fully deterministic for a fixed seed.
inline BackboneModel train_backbone(const SplitBundle& split, const BackboneConfig& config) {
  if (split.num_users == 0) throw DataError("train_backbone: empty split");
  const std::int64_t m = split.num_items;
  const int d = config.dim;

  Rng rng(config.seed);
  RowMatrix emb(m, d);
  const double r = 0.5 / static_cast<double>(d);
  for (std::int64_t i = 0; i < m; ++i)
    for (int j = 0; j < d; ++j) emb(i, j) = (unit_real(rng) * 2.0 - 1.0) * r;

  BackboneModel model(std::move(emb), config.decay, config.max_history);
  if (config.epochs <= 0) return model;

  // All (user, position) pairs with a non-empty prefix.
  std::vector<std::pair<std::int64_t, std::int32_t>> samples;
  std::vector<std::vector<std::int64_t>> user_items_sorted(split.num_users);
  for (std::int64_t u = 0; u < split.num_users; ++u) {
    const auto& seq = split.train_items[u];
    for (std::size_t t = 1; t < seq.size(); ++t)
      samples.emplace_back(u, static_cast<std::int32_t>(t));
    user_items_sorted[u] = seq;
    std::sort(user_items_sorted[u].begin(), user_items_sorted[u].end());
  }
  if (samples.empty()) throw DataError("train_backbone: no training pairs");

  auto sample_negative = [&](std::int64_t u) {
    const auto& owned = user_items_sorted[u];
    if (static_cast<std::int64_t>(owned.size()) >= m)
      throw DataError("train_backbone: user owns the whole catalog");
    while (true) {
      const std::int64_t cand = static_cast<std::int64_t>(bounded_uint(rng, m));
      if (!std::binary_search(owned.begin(), owned.end(), cand)) return cand;
    }
  };

  RowMatrix best = model.item_embeddings();
  double best_ndcg = -1.0;
  int stale = 0;
  auto& table = model.mutable_item_embeddings();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Fisher-Yates shuffle of the sample order
    for (std::size_t i = samples.size(); i > 1; --i)
      std::swap(samples[i - 1], samples[bounded_uint(rng, i)]);

    double epoch_loss = 0.0;
    std::vector<std::int64_t> prefix;
    for (const auto& [u, t] : samples) {
      const auto& seq = split.train_items[u];
      prefix.assign(seq.begin(), seq.begin() + t);
      const std::int64_t pos = seq[t];
      for (int n = 0; n < config.negatives; ++n) {
        const std::int64_t neg = sample_negative(u);
        const auto grads = bpr_gradients(model, prefix, pos, neg);
        epoch_loss += grads.loss;
        for (const auto& [item, grad] : grads.by_item)
          table.row(item) -= config.learning_rate * grad.transpose();
      }
    }
    if (!std::isfinite(epoch_loss))
      throw NumericError("train_backbone: non-finite loss at epoch " + std::to_string(epoch) +
                         " (learning_rate=" + fmt_exact(config.learning_rate) + ")");

    const double ndcg = detail::validation_ndcg(model, split);
    if (ndcg > best_ndcg) {
      best_ndcg = ndcg;
      best = table;
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  return BackboneModel(std::move(best), config.decay, config.max_history);
}

// ---------------------------------------------------------------------------
// Persistence. Layout (little-endian):
//   magic "PSBB", version u32 = 1,
//   m u64, d u64, decay f64, max_history u64,
//   idmap_ref: u64 length + UTF-8 bytes,
//   embeddings: m*d f64, row-major.
// ---------------------------------------------------------------------------

inline void save_backbone(const BackboneModel& model, const std::string& path) {
  BinaryWriter w(path);
  w.magic("PSBB", 1);
  w.u64(static_cast<std::uint64_t>(model.num_items()));
  w.u64(static_cast<std::uint64_t>(model.dim()));
  w.f64(model.decay());
  w.u64(static_cast<std::uint64_t>(model.max_history()));
  w.str(model.idmap_ref());
  w.doubles(model.item_embeddings().data(), model.item_embeddings().size());
}

inline BackboneModel load_backbone(const std::string& path) {
  BinaryReader r(path);
  r.expect_magic("PSBB", 1);
  const std::int64_t m = static_cast<std::int64_t>(r.u64());
  const std::int64_t d = static_cast<std::int64_t>(r.u64());
  const double decay = r.f64();
  const int max_history = static_cast<int>(r.u64());
  const std::string idmap_ref = r.str();
  RowMatrix emb(m, d);
  r.doubles(emb.data(), emb.size());
  return BackboneModel(std::move(emb), decay, max_history, idmap_ref);
}

}  // namespace popsteer
