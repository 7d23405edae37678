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
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace popsteer {

constexpr std::int64_t kParallelBlock = 64;

inline std::int64_t num_blocks(std::int64_t n, std::int64_t block = kParallelBlock) {
  return (n + block - 1) / block;
}

// Runs fn(block_index, begin, end) over fixed-size index blocks. Block
// boundaries do not depend on the thread count, so workers may write
// per-index or per-block slots and the caller merges them in block order;
// the merged result is then identical for any `threads`.
inline void parallel_blocks(std::int64_t n, int threads,
                            const std::function<void(std::int64_t, std::int64_t, std::int64_t)>& fn,
                            std::int64_t block = kParallelBlock) {
  if (n <= 0) return;
  const std::int64_t blocks = num_blocks(n, block);
  if (threads <= 1 || blocks == 1) {
    for (std::int64_t b = 0; b < blocks; ++b)
      fn(b, b * block, std::min(n, (b + 1) * block));
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    while (true) {
      const std::int64_t b = next.fetch_add(1);
      if (b >= blocks) return;
      try {
        fn(b, b * block, std::min(n, (b + 1) * block));
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const int workers = static_cast<int>(std::min<std::int64_t>(threads, blocks));
  pool.reserve(workers);
  for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace popsteer
