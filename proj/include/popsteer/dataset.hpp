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
#include <fstream>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "popsteer/types.hpp"

namespace popsteer {

// One implicit-feedback event. Ids are dense (0..n-1 users, 0..m-1 items)
// once a log has been through load/remap.
struct Interaction {
  std::int64_t user;
  std::int64_t item;
  std::int64_t ts;
};

struct InteractionLog {
  std::int64_t num_users = 0;
  std::int64_t num_items = 0;
  std::vector<Interaction> events;  // original file order preserved
};

struct DatasetStats {
  std::int64_t users = 0;
  std::int64_t items = 0;
  std::int64_t events = 0;
  double density = 0.0;
};

inline DatasetStats dataset_stats(const InteractionLog& log) {
  DatasetStats s;
  s.users = log.num_users;
  s.items = log.num_items;
  s.events = static_cast<std::int64_t>(log.events.size());
  s.density = (log.num_users > 0 && log.num_items > 0)
                  ? static_cast<double>(s.events) /
                        (static_cast<double>(log.num_users) * static_cast<double>(log.num_items))
                  : 0.0;
  return s;
}

enum class LogFormat { Tsv, Csv };

inline LogFormat parse_format(const std::string& s) {
  if (s == "tsv") return LogFormat::Tsv;
  if (s == "csv") return LogFormat::Csv;
  throw UsageError("unknown dataset format '" + s + "' (expected tsv or csv)");
}

// Dense id -> original id, written alongside every prepared dataset.
struct IdMapping {
  std::vector<std::int64_t> users;
  std::vector<std::int64_t> items;
};

struct LoadedLog {
  InteractionLog log;
  IdMapping mapping;
};

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line, LogFormat format) {
  std::vector<std::string> out;
  if (format == LogFormat::Csv) {
    std::size_t start = 0;
    while (true) {
      const std::size_t pos = line.find(',', start);
      out.push_back(line.substr(start, pos == std::string::npos ? pos : pos - start));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
  } else {
    // tsv accepts tabs or runs of spaces
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == '\t' || line[i] == ' ')) ++i;
      if (i >= line.size()) break;
      std::size_t j = i;
      while (j < line.size() && line[j] != '\t' && line[j] != ' ') ++j;
      out.push_back(line.substr(i, j - i));
      i = j;
    }
  }
  return out;
}

inline bool parse_int(const std::string& s, std::int64_t& out) {
  if (s.empty()) return false;
  std::size_t i = (s[0] == '-') ? 1 : 0;
  if (i == s.size()) return false;
  for (; i < s.size(); ++i)
    if (s[i] < '0' || s[i] > '9') return false;
  try {
    out = std::stoll(s);
  } catch (...) {
    return false;
  }
  return true;
}

}  // namespace detail

// Loads user/item/timestamp rows, remapping ids to dense indices in order of
// first appearance. A non-numeric first row is treated as a header, but only
// when data rows follow; a lone unparsable row is a malformed-input error.
inline LoadedLog load_interactions(const std::string& path, LogFormat format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path);

  LoadedLog result;
  std::unordered_map<std::int64_t, std::int64_t> user_ids, item_ids;
  std::string line;
  std::int64_t line_no = 0;
  bool first_content_row = true;

  auto fail = [&](const std::string& what) {
    throw DataError(path + ": line " + std::to_string(line_no) + ": " + what);
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    const auto fields = detail::split_fields(line, format);
    std::int64_t u, i, t;
    if (first_content_row && (fields.empty() || !detail::parse_int(fields[0], u))) {
      // Header candidate: skip it iff at least one more row exists.
      first_content_row = false;
      if (in.peek() == std::char_traits<char>::eof())
        fail("malformed row '" + line + "'");
      continue;
    }
    first_content_row = false;
    if (fields.size() != 3) fail("expected 3 fields, got " + std::to_string(fields.size()));
    if (!detail::parse_int(fields[0], u)) fail("bad user id '" + fields[0] + "'");
    if (!detail::parse_int(fields[1], i)) fail("bad item id '" + fields[1] + "'");
    if (!detail::parse_int(fields[2], t)) fail("bad timestamp '" + fields[2] + "'");

    auto [uit, uin] = user_ids.try_emplace(u, static_cast<std::int64_t>(result.mapping.users.size()));
    if (uin) result.mapping.users.push_back(u);
    auto [iit, iin] = item_ids.try_emplace(i, static_cast<std::int64_t>(result.mapping.items.size()));
    if (iin) result.mapping.items.push_back(i);
    result.log.events.push_back({uit->second, iit->second, t});
  }
  if (result.log.events.empty()) throw DataError(path + ": no interaction rows");
  result.log.num_users = static_cast<std::int64_t>(result.mapping.users.size());
  result.log.num_items = static_cast<std::int64_t>(result.mapping.items.size());
  return result;
}

struct KcoreResult {
  InteractionLog log;
  // new dense id -> id in the input log
  std::vector<std::int64_t> user_ids;
  std::vector<std::int64_t> item_ids;
};

// Iteratively drops users with < k events and items seen by < k distinct
// users until a fixpoint, then re-densifies ids (ascending input order).
inline KcoreResult kcore_filter(const InteractionLog& log, int k) {
  if (k < 1) throw UsageError("kcore_filter: k must be >= 1");

  std::vector<char> user_alive(log.num_users, 1), item_alive(log.num_items, 1);
  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<std::int64_t> user_events(log.num_users, 0);
    std::vector<std::vector<std::int64_t>> item_users(log.num_items);
    for (const auto& e : log.events) {
      if (!user_alive[e.user] || !item_alive[e.item]) continue;
      ++user_events[e.user];
      item_users[e.item].push_back(e.user);
    }
    for (std::int64_t u = 0; u < log.num_users; ++u) {
      if (user_alive[u] && user_events[u] < k) {
        user_alive[u] = 0;
        changed = true;
      }
    }
    for (std::int64_t i = 0; i < log.num_items; ++i) {
      if (!item_alive[i]) continue;
      auto& us = item_users[i];
      std::sort(us.begin(), us.end());
      const auto distinct = std::unique(us.begin(), us.end()) - us.begin();
      if (distinct < k) {
        item_alive[i] = 0;
        changed = true;
      }
    }
  }

  KcoreResult res;
  std::vector<std::int64_t> user_map(log.num_users, -1), item_map(log.num_items, -1);
  for (std::int64_t u = 0; u < log.num_users; ++u)
    if (user_alive[u]) {
      user_map[u] = static_cast<std::int64_t>(res.user_ids.size());
      res.user_ids.push_back(u);
    }
  for (std::int64_t i = 0; i < log.num_items; ++i)
    if (item_alive[i]) {
      item_map[i] = static_cast<std::int64_t>(res.item_ids.size());
      res.item_ids.push_back(i);
    }
  for (const auto& e : log.events)
    if (user_alive[e.user] && item_alive[e.item])
      res.log.events.push_back({user_map[e.user], item_map[e.item], e.ts});
  if (res.log.events.empty()) throw DataError("k-core eliminated all data");
  res.log.num_users = static_cast<std::int64_t>(res.user_ids.size());
  res.log.num_items = static_cast<std::int64_t>(res.item_ids.size());
  return res;
}

// Per-user chronological sequences with the two most recent events held out.
struct SplitBundle {
  std::int64_t num_users = 0;
  std::int64_t num_items = 0;
  std::vector<std::vector<std::int64_t>> train_items;  // chronological
  std::vector<std::vector<std::int64_t>> train_ts;
  std::vector<std::int64_t> valid_item, valid_ts;
  std::vector<std::int64_t> test_item, test_ts;
};

// Sorts each user's events by timestamp (stable on ties, so file order breaks
// them); the last event becomes test, the second-to-last validation.
inline SplitBundle chronological_split(const InteractionLog& log) {
  SplitBundle split;
  split.num_users = log.num_users;
  split.num_items = log.num_items;
  split.train_items.resize(log.num_users);
  split.train_ts.resize(log.num_users);
  split.valid_item.resize(log.num_users);
  split.valid_ts.resize(log.num_users);
  split.test_item.resize(log.num_users);
  split.test_ts.resize(log.num_users);

  std::vector<std::vector<Interaction>> per_user(log.num_users);
  for (const auto& e : log.events) per_user[e.user].push_back(e);

  for (std::int64_t u = 0; u < log.num_users; ++u) {
    auto& seq = per_user[u];
    if (seq.size() < 3)
      throw DataError("user " + std::to_string(u) + " has fewer than 3 events");
    std::stable_sort(seq.begin(), seq.end(),
                     [](const Interaction& a, const Interaction& b) { return a.ts < b.ts; });
    const std::size_t n = seq.size();
    split.train_items[u].reserve(n - 2);
    split.train_ts[u].reserve(n - 2);
    for (std::size_t j = 0; j + 2 < n; ++j) {
      split.train_items[u].push_back(seq[j].item);
      split.train_ts[u].push_back(seq[j].ts);
    }
    split.valid_item[u] = seq[n - 2].item;
    split.valid_ts[u] = seq[n - 2].ts;
    split.test_item[u] = seq[n - 1].item;
    split.test_ts[u] = seq[n - 1].ts;
  }
  return split;
}

enum class ItemLabel : std::uint8_t { Mid = 0, Head = 1, Tail = 2 };

// Head/tail item sets, each accumulating roughly 20% of training
// interactions from the most/least popular end of the catalog.
struct PopularityPartition {
  std::vector<std::int64_t> counts;  // training-split interaction count per item
  std::vector<ItemLabel> label;
  std::vector<std::int64_t> head_items;  // ascending item id
  std::vector<std::int64_t> tail_items;
  double head_mass = 0.0;
  double tail_mass = 0.0;

  bool is_head(std::int64_t i) const { return label[i] == ItemLabel::Head; }
  bool is_tail(std::int64_t i) const { return label[i] == ItemLabel::Tail; }
};

inline PopularityPartition partition_popularity(const SplitBundle& split,
                                                double mass_target = 0.20) {
  const std::int64_t m = split.num_items;
  if (m < 2) throw DataError("partition_popularity: fewer than 2 distinct items");

  PopularityPartition part;
  part.counts.assign(m, 0);
  std::int64_t total = 0;
  for (const auto& seq : split.train_items)
    for (std::int64_t item : seq) {
      ++part.counts[item];
      ++total;
    }
  if (total == 0) throw DataError("partition_popularity: empty training split");

  // Single order: count descending, item id ascending. Head accumulates from
  // the front, tail from the back; the boundary item is included on each side.
  std::vector<std::int64_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
    if (part.counts[a] != part.counts[b]) return part.counts[a] > part.counts[b];
    return a < b;
  });

  part.label.assign(m, ItemLabel::Mid);
  const double target = mass_target * static_cast<double>(total);

  double head_sum = 0.0;
  std::int64_t head_end = 0;
  while (head_end < m && head_sum < target) {
    head_sum += static_cast<double>(part.counts[order[head_end]]);
    ++head_end;
  }
  for (std::int64_t j = 0; j < head_end; ++j) part.label[order[j]] = ItemLabel::Head;
  part.head_mass = head_sum / static_cast<double>(total);

  double tail_sum = 0.0;
  std::int64_t tail_begin = m;
  while (tail_begin > head_end && tail_sum < target) {
    tail_sum += static_cast<double>(part.counts[order[tail_begin - 1]]);
    --tail_begin;
  }
  for (std::int64_t j = tail_begin; j < m; ++j) part.label[order[j]] = ItemLabel::Tail;
  part.tail_mass = tail_sum / static_cast<double>(total);

  for (std::int64_t i = 0; i < m; ++i) {
    if (part.label[i] == ItemLabel::Head) part.head_items.push_back(i);
    if (part.label[i] == ItemLabel::Tail) part.tail_items.push_back(i);
  }
  return part;
}

enum class ProfileMode { Pop, Unpop };

// Rewrites every training profile with items drawn uniformly (with
// replacement) from the head or tail set; lengths and timestamps survive.
inline InteractionLog synthesize_profiles(const SplitBundle& split,
                                          const PopularityPartition& partition,
                                          ProfileMode mode, std::uint64_t seed) {
  const auto& pool =
      (mode == ProfileMode::Pop) ? partition.head_items : partition.tail_items;
  if (pool.empty())
    throw DataError("synthesize_profiles: empty target item set");

  InteractionLog out;
  out.num_users = split.num_users;
  out.num_items = split.num_items;
  Rng rng(seed);
  for (std::int64_t u = 0; u < split.num_users; ++u) {
    const auto& items = split.train_items[u];
    const auto& ts = split.train_ts[u];
    for (std::size_t j = 0; j < items.size(); ++j) {
      const std::int64_t pick = pool[bounded_uint(rng, pool.size())];
      out.events.push_back({u, pick, ts[j]});
    }
  }
  return out;
}

// Seeded power-law dataset for desk-scale experiments: item popularity is
// Zipf(exponent), per-user event counts are uniform in [events_min,
// events_max], timestamps count up within each user.
inline InteractionLog generate_powerlaw_dataset(std::int64_t n_users, std::int64_t n_items,
                                                std::int64_t events_min, std::int64_t events_max,
                                                double zipf_exponent, std::uint64_t seed) {
  if (n_users < 10 || n_items < 10)
    throw UsageError("generate_powerlaw_dataset: need at least 10 users and 10 items");
  if (zipf_exponent <= 0) throw UsageError("generate_powerlaw_dataset: zipf exponent must be > 0");
  if (events_min > events_max)
    throw UsageError("generate_powerlaw_dataset: events_min > events_max");
  if (events_min < 3)
    throw DataError("generate_powerlaw_dataset: parameters produce < 3 events for some user");

  std::vector<double> cdf(n_items);
  double acc = 0.0;
  for (std::int64_t i = 0; i < n_items; ++i) {
    acc += std::pow(static_cast<double>(i + 1), -zipf_exponent);
    cdf[i] = acc;
  }

  InteractionLog log;
  log.num_users = n_users;
  log.num_items = n_items;
  Rng rng(seed);
  for (std::int64_t u = 0; u < n_users; ++u) {
    const std::int64_t len =
        events_min + static_cast<std::int64_t>(bounded_uint(
                         rng, static_cast<std::uint64_t>(events_max - events_min + 1)));
    for (std::int64_t t = 0; t < len; ++t) {
      const double r = unit_real(rng) * acc;
      const std::int64_t item =
          std::lower_bound(cdf.begin(), cdf.end(), r) - cdf.begin();
      log.events.push_back({u, std::min(item, n_items - 1), t});
    }
  }
  return log;
}

}  // namespace popsteer
