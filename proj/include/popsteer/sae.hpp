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
#include <string>
#include <vector>

#include "popsteer/io.hpp"
#include "popsteer/types.hpp"

namespace popsteer {

// Top-K sparse autoencoder over backbone user embeddings.
//   encode:  z = W_enc^T (x - b_pre),  a = ReLU(z),  keep K largest
//   decode:  x_hat = W_dec a + b_pre
// dead_window == 0 means "derive as 10 * batch_size at training time".
struct SaeModel {
  Matrix W_enc;  // d x N
  Matrix W_dec;  // d x N, unit-norm columns maintained during training
  Vector b_pre;  // d
  int K = 0;
  std::int64_t N = 0;
  double gamma = 1.0 / 32.0;
  int k_aux = 0;
  std::int64_t dead_window = 0;

  int dim() const { return static_cast<int>(b_pre.size()); }
};

// Nonzero activations, indices strictly increasing. Encode guarantees at
// most K entries; steering may produce more.
struct SparseActivation {
  std::vector<std::int32_t> indices;
  std::vector<double> values;
  std::int64_t width = 0;

  std::int64_t nnz() const { return static_cast<std::int64_t>(indices.size()); }
};

inline Vector to_dense(const SparseActivation& a) {
  Vector out = Vector::Zero(a.width);
  for (std::size_t i = 0; i < a.indices.size(); ++i) out[a.indices[i]] = a.values[i];
  return out;
}

// b_pre = 0; W_dec columns uniform then unit-normalized; W_enc starts as the
// transpose-tied copy of W_dec (untied during training).
inline SaeModel init_sae(int d, int scale, int K, std::uint64_t seed) {
  if (d < 1 || scale < 1) throw UsageError("init_sae: d and scale must be >= 1");
  if (K < 1) throw UsageError("init_sae: K must be >= 1");
  if (K >= d) throw UsageError("init_sae: K must be < d");
  const std::int64_t N = static_cast<std::int64_t>(scale) * d;

  SaeModel sae;
  sae.K = K;
  sae.N = N;
  sae.k_aux = 2 * K;
  sae.b_pre = Vector::Zero(d);
  sae.W_dec.resize(d, N);
  Rng rng(seed);
  for (std::int64_t j = 0; j < N; ++j) {
    for (int i = 0; i < d; ++i) sae.W_dec(i, j) = unit_real(rng) - 0.5;
    const double norm = sae.W_dec.col(j).norm();
    if (norm == 0.0) throw NumericError("init_sae: zero decoder column");
    sae.W_dec.col(j) /= norm;
  }
  sae.W_enc = sae.W_dec;
  return sae;
}

inline Vector pre_activations(const SaeModel& sae, const Vector& x) {
  if (x.size() != sae.b_pre.size()) throw DataError("encode: dimension mismatch");
  return sae.W_enc.transpose() * (x - sae.b_pre);
}

// ReLU then top-K mask; ties broken by ascending neuron id. Entries that are
// zero after ReLU never enter the result, so nnz <= K.
inline SparseActivation encode(const SaeModel& sae, const Vector& x) {
  const Vector z = pre_activations(sae, x);
  std::vector<std::int32_t> positive;
  positive.reserve(sae.K * 4);
  for (std::int64_t j = 0; j < sae.N; ++j)
    if (z[j] > 0.0) positive.push_back(static_cast<std::int32_t>(j));

  if (static_cast<int>(positive.size()) > sae.K) {
    std::partial_sort(positive.begin(), positive.begin() + sae.K, positive.end(),
                      [&](std::int32_t a, std::int32_t b) {
                        if (z[a] != z[b]) return z[a] > z[b];
                        return a < b;
                      });
    positive.resize(sae.K);
    std::sort(positive.begin(), positive.end());
  }

  SparseActivation out;
  out.width = sae.N;
  out.indices = std::move(positive);
  out.values.reserve(out.indices.size());
  for (std::int32_t j : out.indices) out.values.push_back(z[j]);
  return out;
}

inline Vector decode(const SaeModel& sae, const SparseActivation& a) {
  Vector x_hat = sae.b_pre;
  for (std::size_t i = 0; i < a.indices.size(); ++i)
    x_hat += a.values[i] * sae.W_dec.col(a.indices[i]);
  return x_hat;
}

inline Vector reconstruct(const SaeModel& sae, const Vector& x) {
  return decode(sae, encode(sae, x));
}

// Reconstruction loss ||x_hat - x||^2 with the top-K mask pinned to the given
// index set (ReLU still applies inside the mask). Used by gradient checks.
inline double masked_loss(const SaeModel& sae, const Vector& x,
                          const std::vector<std::int32_t>& mask) {
  const Vector centered = x - sae.b_pre;
  Vector x_hat = sae.b_pre;
  for (std::int32_t j : mask) {
    const double z = sae.W_enc.col(j).dot(centered);
    if (z > 0.0) x_hat += z * sae.W_dec.col(j);
  }
  return (x_hat - x).squaredNorm();
}

struct SaeBatch {
  double loss = 0.0;       // sum of per-example objectives
  double main_loss = 0.0;  // sum ||x - x_hat||^2
  double aux_loss = 0.0;   // sum of unweighted auxiliary terms
  Matrix grad_enc;
  Matrix grad_dec;
  Vector grad_b;
  std::vector<SparseActivation> masks;  // per example, in input order
};

// Batch objective (sum over examples) and its gradients:
//   L = ||x - x_hat||^2 + gamma * ||res - W_dec z_aux||^2
// where res = x - x_hat is treated as a constant and z_aux holds the raw
// pre-activations of the top-k_aux dead neurons (selected per example).
inline SaeBatch sae_batch_gradients(const SaeModel& sae, const std::vector<Vector>& batch,
                                    const std::vector<char>& dead) {
  const int d = sae.dim();
  SaeBatch out;
  out.grad_enc = Matrix::Zero(d, sae.N);
  out.grad_dec = Matrix::Zero(d, sae.N);
  out.grad_b = Vector::Zero(d);
  out.masks.reserve(batch.size());

  std::vector<std::int32_t> dead_ids;
  for (std::int64_t j = 0; j < sae.N; ++j)
    if (!dead.empty() && dead[j]) dead_ids.push_back(static_cast<std::int32_t>(j));

  std::vector<std::int32_t> aux_ids;
  for (const Vector& x : batch) {
    const Vector centered = x - sae.b_pre;
    const Vector z = sae.W_enc.transpose() * centered;

    SparseActivation act;
    act.width = sae.N;
    {
      std::vector<std::int32_t> positive;
      for (std::int64_t j = 0; j < sae.N; ++j)
        if (z[j] > 0.0) positive.push_back(static_cast<std::int32_t>(j));
      if (static_cast<int>(positive.size()) > sae.K) {
        std::partial_sort(positive.begin(), positive.begin() + sae.K, positive.end(),
                          [&](std::int32_t a, std::int32_t b) {
                            if (z[a] != z[b]) return z[a] > z[b];
                            return a < b;
                          });
        positive.resize(sae.K);
        std::sort(positive.begin(), positive.end());
      }
      act.indices = std::move(positive);
      for (std::int32_t j : act.indices) act.values.push_back(z[j]);
    }

    Vector x_hat = sae.b_pre;
    for (std::size_t i = 0; i < act.indices.size(); ++i)
      x_hat += act.values[i] * sae.W_dec.col(act.indices[i]);
    const Vector err = x_hat - x;
    out.main_loss += err.squaredNorm();

    Vector d_centered = Vector::Zero(d);
    for (std::size_t i = 0; i < act.indices.size(); ++i) {
      const std::int32_t j = act.indices[i];
      const double dz = 2.0 * err.dot(sae.W_dec.col(j));
      out.grad_dec.col(j) += 2.0 * act.values[i] * err;
      out.grad_enc.col(j) += dz * centered;
      d_centered += dz * sae.W_enc.col(j);
    }
    out.grad_b += 2.0 * err - d_centered;

    if (sae.gamma != 0.0 && !dead_ids.empty()) {
      aux_ids.assign(dead_ids.begin(), dead_ids.end());
      const int take = std::min<int>(sae.k_aux, static_cast<int>(aux_ids.size()));
      std::partial_sort(aux_ids.begin(), aux_ids.begin() + take, aux_ids.end(),
                        [&](std::int32_t a, std::int32_t b) {
                          if (z[a] != z[b]) return z[a] > z[b];
                          return a < b;
                        });
      aux_ids.resize(take);

      Vector aux_hat = Vector::Zero(d);
      for (std::int32_t j : aux_ids) aux_hat += z[j] * sae.W_dec.col(j);
      const Vector aux_err = aux_hat + err;  // aux_hat - (x - x_hat)
      out.aux_loss += aux_err.squaredNorm();

      Vector d_centered_aux = Vector::Zero(d);
      for (std::int32_t j : aux_ids) {
        const double dz = 2.0 * sae.gamma * aux_err.dot(sae.W_dec.col(j));
        out.grad_dec.col(j) += 2.0 * sae.gamma * z[j] * aux_err;
        out.grad_enc.col(j) += dz * centered;
        d_centered_aux += dz * sae.W_enc.col(j);
      }
      out.grad_b -= d_centered_aux;
    }
    out.masks.push_back(std::move(act));
  }
  out.loss = out.main_loss + sae.gamma * out.aux_loss;
  return out;
}

struct SaeTrainConfig {
  double learning_rate = 1e-3;
  int epochs = 15;
  int batch_size = 256;
  std::uint64_t seed = 2;
};

namespace detail {

struct AdamState {
  Matrix m_enc, v_enc, m_dec, v_dec;
  Vector m_b, v_b;
  std::int64_t t = 0;
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  AdamState(int d, std::int64_t n)
      : m_enc(Matrix::Zero(d, n)),
        v_enc(Matrix::Zero(d, n)),
        m_dec(Matrix::Zero(d, n)),
        v_dec(Matrix::Zero(d, n)),
        m_b(Vector::Zero(d)),
        v_b(Vector::Zero(d)) {}

  template <typename P, typename G>
  void apply_one(P& param, G& m, G& v, const G& grad, double lr) {
    m = kBeta1 * m + (1.0 - kBeta1) * grad;
    v = kBeta2 * v + (1.0 - kBeta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t));
    param -= (lr * (m / c1).array() / ((v / c2).array().sqrt() + kEps)).matrix();
  }

  void apply(SaeModel& sae, const SaeBatch& grads, double lr) {
    ++t;
    apply_one(sae.W_enc, m_enc, v_enc, grads.grad_enc, lr);
    apply_one(sae.W_dec, m_dec, v_dec, grads.grad_dec, lr);
    apply_one(sae.b_pre, m_b, v_b, grads.grad_b, lr);
  }
};

}  // namespace detail

// Unit-normalizes every decoder column and folds the scale into the matching
// encoder column, leaving x_hat unchanged wherever the top-K mask is stable.
inline void renormalize_decoder(SaeModel& sae) {
  for (std::int64_t j = 0; j < sae.N; ++j) {
    const double norm = sae.W_dec.col(j).norm();
    if (norm > 0.0) {
      sae.W_dec.col(j) /= norm;
      sae.W_enc.col(j) *= norm;
    }
  }
}

// Seeded mini-batch Adam on the summed objective. Dead set is refreshed at
// each batch start: a neuron is dead when it has missed every top-K mask over
// the last dead_window examples.
inline SaeModel train_sae(SaeModel sae, const std::vector<Vector>& embeddings,
                          const SaeTrainConfig& config) {
  if (embeddings.empty()) throw DataError("train_sae: empty embedding stream");
  if (config.batch_size < 1) throw UsageError("train_sae: batch_size must be >= 1");
  const std::int64_t window =
      sae.dead_window > 0 ? sae.dead_window
                          : static_cast<std::int64_t>(10) * config.batch_size;
  sae.dead_window = window;

  const std::int64_t n = static_cast<std::int64_t>(embeddings.size());
  std::vector<std::int64_t> order(n);
  for (std::int64_t i = 0; i < n; ++i) order[i] = i;

  Rng rng(config.seed);
  detail::AdamState adam(sae.dim(), sae.N);
  std::vector<std::int64_t> last_active(sae.N, 0);
  std::vector<char> dead(sae.N, 0);
  std::int64_t examples_seen = 0;
  std::int64_t batch_index = 0;
  std::vector<Vector> batch;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::int64_t i = n; i > 1; --i)
      std::swap(order[i - 1], order[bounded_uint(rng, static_cast<std::uint64_t>(i))]);

    for (std::int64_t start = 0; start < n; start += config.batch_size) {
      const std::int64_t stop = std::min<std::int64_t>(start + config.batch_size, n);
      batch.clear();
      for (std::int64_t i = start; i < stop; ++i) batch.push_back(embeddings[order[i]]);

      std::int64_t dead_count = 0;
      for (std::int64_t j = 0; j < sae.N; ++j) {
        dead[j] = last_active[j] <= examples_seen - window ? 1 : 0;
        dead_count += dead[j];
      }
      if (dead_count == sae.N)
        throw NumericError("train_sae: all neurons dead at batch " + std::to_string(batch_index));

      const SaeBatch grads = sae_batch_gradients(sae, batch, dead);
      if (!std::isfinite(grads.loss))
        throw NumericError("train_sae: non-finite loss at batch " + std::to_string(batch_index));

      adam.apply(sae, grads, config.learning_rate);
      renormalize_decoder(sae);

      for (const SparseActivation& mask : grads.masks) {
        ++examples_seen;
        for (std::int32_t j : mask.indices) last_active[j] = examples_seen;
      }
      ++batch_index;
    }
  }
  return sae;
}

struct ReconstructionReport {
  double normalized_mse = 0.0;
  double dead_fraction = 0.0;
  double mean_active = 0.0;
};

// normalized_mse = sum ||x - x_hat||^2 / sum ||x - mean||^2 over the stream.
inline ReconstructionReport reconstruction_report(const SaeModel& sae,
                                                  const std::vector<Vector>& embeddings) {
  if (embeddings.empty()) throw DataError("reconstruction_report: empty stream");
  Vector mean = Vector::Zero(sae.dim());
  for (const Vector& x : embeddings) mean += x;
  mean /= static_cast<double>(embeddings.size());

  double err_sum = 0.0;
  double var_sum = 0.0;
  double active_sum = 0.0;
  std::vector<char> ever_active(sae.N, 0);
  for (const Vector& x : embeddings) {
    const SparseActivation a = encode(sae, x);
    err_sum += (decode(sae, a) - x).squaredNorm();
    var_sum += (x - mean).squaredNorm();
    active_sum += static_cast<double>(a.nnz());
    for (std::int32_t j : a.indices) ever_active[j] = 1;
  }
  if (var_sum <= 0.0) throw NumericError("reconstruction_report: zero-variance stream");

  ReconstructionReport report;
  report.normalized_mse = err_sum / var_sum;
  std::int64_t active_neurons = 0;
  for (char f : ever_active) active_neurons += f;
  report.dead_fraction =
      1.0 - static_cast<double>(active_neurons) / static_cast<double>(sae.N);
  report.mean_active = active_sum / static_cast<double>(embeddings.size());
  return report;
}

// ---------------------------------------------------------------------------
// Persistence. Layout (little-endian):
//   magic "PSAE", version u32 = 1,
//   d u64, N u64, K u64, gamma f64, k_aux u64, dead_window u64,
//   W_enc, W_dec: d*N f64 each, column-major; b_pre: d f64.
// ---------------------------------------------------------------------------

inline void save_sae(const SaeModel& sae, const std::string& path) {
  BinaryWriter w(path);
  w.magic("PSAE", 1);
  w.u64(static_cast<std::uint64_t>(sae.dim()));
  w.u64(static_cast<std::uint64_t>(sae.N));
  w.u64(static_cast<std::uint64_t>(sae.K));
  w.f64(sae.gamma);
  w.u64(static_cast<std::uint64_t>(sae.k_aux));
  w.u64(static_cast<std::uint64_t>(sae.dead_window));
  w.doubles(sae.W_enc.data(), sae.W_enc.size());
  w.doubles(sae.W_dec.data(), sae.W_dec.size());
  w.doubles(sae.b_pre.data(), sae.b_pre.size());
}

inline SaeModel load_sae(const std::string& path) {
  BinaryReader r(path);
  r.expect_magic("PSAE", 1);
  const std::int64_t d = static_cast<std::int64_t>(r.u64());
  const std::int64_t N = static_cast<std::int64_t>(r.u64());
  SaeModel sae;
  sae.K = static_cast<int>(r.u64());
  sae.N = N;
  sae.gamma = r.f64();
  sae.k_aux = static_cast<int>(r.u64());
  sae.dead_window = static_cast<std::int64_t>(r.u64());
  sae.W_enc.resize(d, N);
  sae.W_dec.resize(d, N);
  sae.b_pre.resize(d);
  r.doubles(sae.W_enc.data(), sae.W_enc.size());
  r.doubles(sae.W_dec.data(), sae.W_dec.size());
  r.doubles(sae.b_pre.data(), sae.b_pre.size());
  return sae;
}

}  // namespace popsteer
