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

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace popsteer {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
// Row-major layout for tables whose rows are per-item/per-example vectors.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Bad or inconsistent input data / artifacts. CLI exit code 2.
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Numerical failure (divergence, non-finite values). CLI exit code 3.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or command usage. CLI exit code 1.
class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// All randomness flows through mt19937_64 engines seeded from explicit
// config values; the raw engine output is portable, so every distribution
// below is hand-rolled on top of it instead of <random> distributions
// (whose sequences are implementation-defined).
using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent per-stream seed (e.g. one stream per user).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(base ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

// Uniform integer in [0, bound), rejection-sampled to avoid modulo bias.
inline std::uint64_t bounded_uint(Rng& rng, std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("bounded_uint: bound must be positive");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % bound;
}

// Uniform double in [0, 1) with 53 random bits.
inline double unit_real(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller; consumes two engine draws per sample.
inline double gaussian(Rng& rng) {
  const double u1 = 1.0 - unit_real(rng);  // (0, 1]
  const double u2 = unit_real(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace popsteer
