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

#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "popsteer/dataset.hpp"

namespace testutil {

inline std::string write_tmp(const std::string& name, const std::string& content) {
  const auto dir = std::filesystem::temp_directory_path() / "popsteer_tests";
  std::filesystem::create_directories(dir);
  const auto path = dir / name;
  std::ofstream out(path);
  out << content;
  return path.string();
}

inline std::string tmp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "popsteer_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

inline popsteer::InteractionLog log_from_triples(
    std::int64_t num_users, std::int64_t num_items,
    const std::vector<popsteer::Interaction>& events) {
  popsteer::InteractionLog log;
  log.num_users = num_users;
  log.num_items = num_items;
  log.events = events;
  return log;
}

// Single-user split whose training sequence holds counts[i] copies of item i.
inline popsteer::SplitBundle split_from_counts(const std::vector<std::int64_t>& counts) {
  popsteer::SplitBundle split;
  split.num_users = 1;
  split.num_items = static_cast<std::int64_t>(counts.size());
  split.train_items.resize(1);
  split.train_ts.resize(1);
  std::int64_t t = 0;
  for (std::size_t i = 0; i < counts.size(); ++i)
    for (std::int64_t c = 0; c < counts[i]; ++c) {
      split.train_items[0].push_back(static_cast<std::int64_t>(i));
      split.train_ts[0].push_back(t++);
    }
  split.valid_item.assign(1, 0);
  split.valid_ts.assign(1, t);
  split.test_item.assign(1, 0);
  split.test_ts.assign(1, t + 1);
  return split;
}

}  // namespace testutil
