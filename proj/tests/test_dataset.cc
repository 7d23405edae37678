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
#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <map>
#include <set>

#include "helpers.hpp"
#include "oracles.hpp"
#include "popsteer/dataset.hpp"
#include "popsteer/metrics.hpp"

using namespace popsteer;
using Catch::Matchers::ContainsSubstring;

TEST_CASE("load_interactions remaps ids densely in first-appearance order", "[dataset]") {
  const auto path = testutil::write_tmp("load_basic.tsv",
                                        "7\t3\t100\n"
                                        "9\t3\t50\n"
                                        "7\t5\t10\n");
  const auto loaded = load_interactions(path, LogFormat::Tsv);
  REQUIRE(loaded.log.num_users == 2);
  REQUIRE(loaded.log.num_items == 2);
  REQUIRE(loaded.log.events.size() == 3);
  CHECK(loaded.log.events[0].user == 0);
  CHECK(loaded.log.events[0].item == 0);
  CHECK(loaded.log.events[0].ts == 100);
  CHECK(loaded.log.events[1].user == 1);
  CHECK(loaded.log.events[1].item == 0);
  CHECK(loaded.log.events[2].user == 0);
  CHECK(loaded.log.events[2].item == 1);
  CHECK(loaded.mapping.users == std::vector<std::int64_t>{7, 9});
  CHECK(loaded.mapping.items == std::vector<std::int64_t>{3, 5});

  const auto stats = dataset_stats(loaded.log);
  CHECK(stats.users == 2);
  CHECK(stats.items == 2);
  CHECK(stats.events == 3);
  CHECK(stats.density == Catch::Approx(3.0 / 4.0));
}

TEST_CASE("load_interactions skips a header row when data follows", "[dataset]") {
  const auto path = testutil::write_tmp("load_header.tsv",
                                        "user\titem\tts\n"
                                        "1\t2\t3\n"
                                        "4\t5\t6\n");
  const auto loaded = load_interactions(path, LogFormat::Tsv);
  CHECK(loaded.log.events.size() == 2);
  CHECK(loaded.mapping.users == std::vector<std::int64_t>{1, 4});
}

TEST_CASE("load_interactions reads csv", "[dataset]") {
  const auto path = testutil::write_tmp("load.csv", "1,2,3\n1,4,5\n");
  const auto loaded = load_interactions(path, LogFormat::Csv);
  CHECK(loaded.log.num_users == 1);
  CHECK(loaded.log.num_items == 2);
}

TEST_CASE("load_interactions errors name the offending line", "[dataset]") {
  SECTION("lone non-numeric row") {
    const auto path = testutil::write_tmp("load_lone.tsv", "a b c\n");
    REQUIRE_THROWS_MATCHES(load_interactions(path, LogFormat::Tsv), DataError,
                           Catch::Matchers::MessageMatches(ContainsSubstring("line 1")));
  }
  SECTION("wrong arity") {
    const auto path = testutil::write_tmp("load_arity.tsv", "1\t2\t3\n4\t5\n");
    REQUIRE_THROWS_MATCHES(load_interactions(path, LogFormat::Tsv), DataError,
                           Catch::Matchers::MessageMatches(ContainsSubstring("line 2")));
  }
  SECTION("bad timestamp") {
    const auto path = testutil::write_tmp("load_ts.tsv", "1\t2\t3\n4\t5\tx\n");
    REQUIRE_THROWS_MATCHES(load_interactions(path, LogFormat::Tsv), DataError,
                           Catch::Matchers::MessageMatches(ContainsSubstring("timestamp")));
  }
  SECTION("empty file") {
    const auto path = testutil::write_tmp("load_empty.tsv", "");
    REQUIRE_THROWS_AS(load_interactions(path, LogFormat::Tsv), DataError);
  }
  SECTION("missing file") {
    REQUIRE_THROWS_AS(load_interactions("/nonexistent/x.tsv", LogFormat::Tsv), DataError);
  }
}

TEST_CASE("parse_format accepts tsv and csv only", "[dataset]") {
  CHECK(parse_format("tsv") == LogFormat::Tsv);
  CHECK(parse_format("csv") == LogFormat::Csv);
  REQUIRE_THROWS_AS(parse_format("json"), UsageError);
}

TEST_CASE("kcore_filter cascades drops to a fixpoint", "[dataset]") {
  // item 2 is seen by one user; dropping it leaves user 2 with one event,
  // which drops user 2 in the next sweep while items 0 and 1 survive.
  const auto log = testutil::log_from_triples(3, 3,
                                              {{0, 0, 1},
                                               {0, 1, 2},
                                               {1, 0, 3},
                                               {1, 1, 4},
                                               {2, 2, 5},
                                               {2, 0, 6}});
  const auto res = kcore_filter(log, 2);
  CHECK(res.user_ids == std::vector<std::int64_t>{0, 1});
  CHECK(res.item_ids == std::vector<std::int64_t>{0, 1});
  REQUIRE(res.log.events.size() == 4);
  CHECK(res.log.num_users == 2);
  CHECK(res.log.num_items == 2);
}

TEST_CASE("kcore_filter can eliminate everything", "[dataset]") {
  // Star graph: every item has exactly one distinct user.
  std::vector<Interaction> events;
  for (std::int64_t i = 0; i < 5; ++i) events.push_back({0, i, i});
  const auto log = testutil::log_from_triples(1, 5, events);
  REQUIRE_THROWS_MATCHES(kcore_filter(log, 5), DataError,
                         Catch::Matchers::MessageMatches(ContainsSubstring("eliminated all")));
}

TEST_CASE("kcore_filter with k=1 keeps every event", "[dataset]") {
  const auto log = testutil::log_from_triples(2, 2, {{0, 0, 1}, {1, 1, 2}, {0, 1, 3}});
  const auto res = kcore_filter(log, 1);
  CHECK(res.log.events.size() == log.events.size());
  CHECK(res.log.num_users == 2);
  CHECK(res.log.num_items == 2);
}

TEST_CASE("kcore_filter postcondition holds on random logs", "[dataset]") {
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Interaction> events;
    const std::int64_t n = 30, m = 20;
    const int count = 150 + static_cast<int>(bounded_uint(rng, 100));
    for (int e = 0; e < count; ++e)
      events.push_back({static_cast<std::int64_t>(bounded_uint(rng, n)),
                        static_cast<std::int64_t>(bounded_uint(rng, m)),
                        static_cast<std::int64_t>(e)});
    const int k = 3;
    KcoreResult res;
    try {
      res = kcore_filter(testutil::log_from_triples(n, m, events), k);
    } catch (const DataError&) {
      continue;
    }
    std::vector<std::int64_t> user_events(res.log.num_users, 0);
    std::vector<std::set<std::int64_t>> item_users(res.log.num_items);
    for (const auto& e : res.log.events) {
      ++user_events[e.user];
      item_users[e.item].insert(e.user);
    }
    for (auto c : user_events) REQUIRE(c >= k);
    for (const auto& us : item_users) REQUIRE(static_cast<int>(us.size()) >= k);
  }
}

TEST_CASE("chronological_split holds out the last two events", "[dataset]") {
  const auto log = testutil::log_from_triples(
      1, 4, {{0, 0, 1}, {0, 1, 2}, {0, 2, 3}, {0, 3, 4}});
  const auto split = chronological_split(log);
  CHECK(split.train_items[0] == std::vector<std::int64_t>{0, 1});
  CHECK(split.valid_item[0] == 2);
  CHECK(split.test_item[0] == 3);
}

TEST_CASE("chronological_split breaks timestamp ties by file order", "[dataset]") {
  // a@5, b@5, c@9 in file order: stable sort keeps a before b.
  const auto log = testutil::log_from_triples(1, 3, {{0, 0, 5}, {0, 1, 5}, {0, 2, 9}});
  const auto split = chronological_split(log);
  CHECK(split.train_items[0] == std::vector<std::int64_t>{0});
  CHECK(split.valid_item[0] == 1);
  CHECK(split.test_item[0] == 2);
}

TEST_CASE("chronological_split rejects users with fewer than 3 events", "[dataset]") {
  const auto log = testutil::log_from_triples(1, 2, {{0, 0, 1}, {0, 1, 2}});
  REQUIRE_THROWS_MATCHES(chronological_split(log), DataError,
                         Catch::Matchers::MessageMatches(ContainsSubstring("fewer than 3")));
}

TEST_CASE("chronological_split reassembles each user's history", "[dataset]") {
  const auto log = generate_powerlaw_dataset(40, 30, 3, 8, 1.0, 5);
  const auto split = chronological_split(log);

  std::vector<std::multiset<std::int64_t>> original(log.num_users);
  for (const auto& e : log.events) original[e.user].insert(e.item);

  for (std::int64_t u = 0; u < log.num_users; ++u) {
    std::multiset<std::int64_t> rebuilt(split.train_items[u].begin(),
                                        split.train_items[u].end());
    rebuilt.insert(split.valid_item[u]);
    rebuilt.insert(split.test_item[u]);
    REQUIRE(rebuilt == original[u]);
    for (auto t : split.train_ts[u]) REQUIRE(t <= split.valid_ts[u]);
    REQUIRE(split.valid_ts[u] <= split.test_ts[u]);
    REQUIRE(std::is_sorted(split.train_ts[u].begin(), split.train_ts[u].end()));
  }
}

TEST_CASE("partition_popularity hand-checked example", "[dataset]") {
  const auto split = testutil::split_from_counts({50, 30, 10, 5, 5});
  const auto part = partition_popularity(split, 0.20);
  CHECK(part.head_items == std::vector<std::int64_t>{0});
  CHECK(part.tail_items == std::vector<std::int64_t>{2, 3, 4});
  CHECK(part.head_mass == Catch::Approx(0.50));
  CHECK(part.tail_mass == Catch::Approx(0.20));
  CHECK(part.is_head(0));
  CHECK(!part.is_head(1));
  CHECK(!part.is_tail(1));
  CHECK(part.label[1] == ItemLabel::Mid);
}

TEST_CASE("partition_popularity breaks count ties by ascending item id", "[dataset]") {
  const auto split = testutil::split_from_counts({10, 10, 10, 10, 10});
  const auto part = partition_popularity(split, 0.20);
  CHECK(part.head_items == std::vector<std::int64_t>{0});
  CHECK(part.tail_items == std::vector<std::int64_t>{4});
  CHECK(part.head_mass == Catch::Approx(0.20));
  CHECK(part.tail_mass == Catch::Approx(0.20));
}

TEST_CASE("partition_popularity mass invariants on random splits", "[dataset]") {
  Rng rng(31);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<std::int64_t> counts(10 + bounded_uint(rng, 30));
    for (auto& c : counts) c = 1 + static_cast<std::int64_t>(bounded_uint(rng, 40));
    const auto split = testutil::split_from_counts(counts);
    const auto part = partition_popularity(split, 0.20);

    REQUIRE(!part.head_items.empty());
    REQUIRE(!part.tail_items.empty());
    for (auto h : part.head_items) REQUIRE(!part.is_tail(h));

    std::int64_t min_head = INT64_MAX, max_tail = INT64_MIN;
    std::int64_t max_other_for_head = INT64_MIN, min_other_for_tail = INT64_MAX;
    for (std::size_t i = 0; i < counts.size(); ++i) {
      const auto id = static_cast<std::int64_t>(i);
      if (part.is_head(id))
        min_head = std::min(min_head, counts[i]);
      else
        max_other_for_head = std::max(max_other_for_head, counts[i]);
      if (part.is_tail(id))
        max_tail = std::max(max_tail, counts[i]);
      else
        min_other_for_tail = std::min(min_other_for_tail, counts[i]);
    }
    if (max_other_for_head != INT64_MIN) REQUIRE(min_head >= max_other_for_head);
    if (min_other_for_tail != INT64_MAX) REQUIRE(max_tail <= min_other_for_tail);

    const double total = static_cast<double>(
        std::accumulate(counts.begin(), counts.end(), std::int64_t{0}));
    const double head_boundary =
        static_cast<double>(counts[static_cast<std::size_t>(part.head_items.back())]) / total;
    // Boundary slack: the last item pulled in may overshoot the 20% target.
    REQUIRE(part.head_mass >= 0.20 - 1e-12);
    REQUIRE(part.head_mass <= 0.20 + head_boundary + 1e-12);
    REQUIRE(part.tail_mass >= 0.20 - 1e-12);
  }
}

TEST_CASE("partition_popularity single-count catalog hits the target exactly", "[dataset]") {
  const auto split = testutil::split_from_counts({1, 1, 1, 1, 1});
  const auto part = partition_popularity(split, 0.20);
  CHECK(part.head_mass == Catch::Approx(0.20));
  CHECK(part.tail_mass == Catch::Approx(0.20));
  CHECK(part.head_items.size() == 1);
  CHECK(part.tail_items.size() == 1);
}

TEST_CASE("partition_popularity rejects degenerate catalogs", "[dataset]") {
  popsteer::SplitBundle split;
  split.num_users = 1;
  split.num_items = 1;
  split.train_items = {{0, 0, 0}};
  split.train_ts = {{0, 1, 2}};
  REQUIRE_THROWS_AS(partition_popularity(split), DataError);
}

TEST_CASE("synthesize_profiles draws only from the requested pool", "[dataset]") {
  const auto split = testutil::split_from_counts({50, 30, 10, 5, 5});
  const auto part = partition_popularity(split, 0.20);
  const auto pop = synthesize_profiles(split, part, ProfileMode::Pop, 101);
  const auto unpop = synthesize_profiles(split, part, ProfileMode::Unpop, 102);

  REQUIRE(pop.events.size() == split.train_items[0].size());
  REQUIRE(unpop.events.size() == split.train_items[0].size());
  for (const auto& e : pop.events) REQUIRE(part.is_head(e.item));
  for (const auto& e : unpop.events) REQUIRE(part.is_tail(e.item));
  for (std::size_t j = 0; j < pop.events.size(); ++j)
    REQUIRE(pop.events[j].ts == split.train_ts[0][j]);
}

TEST_CASE("synthesize_profiles with a singleton pool is constant", "[dataset]") {
  const auto split = testutil::split_from_counts({50, 30, 10, 5, 5});
  const auto part = partition_popularity(split, 0.20);
  REQUIRE(part.head_items.size() == 1);
  const auto pop = synthesize_profiles(split, part, ProfileMode::Pop, 7);
  for (const auto& e : pop.events) REQUIRE(e.item == part.head_items[0]);
}

TEST_CASE("synthesize_profiles is seed-deterministic", "[dataset]") {
  const auto log = generate_powerlaw_dataset(30, 25, 4, 9, 1.0, 3);
  const auto split = chronological_split(log);
  const auto part = partition_popularity(split, 0.20);
  const auto a = synthesize_profiles(split, part, ProfileMode::Pop, 42);
  const auto b = synthesize_profiles(split, part, ProfileMode::Pop, 42);
  REQUIRE(a.events.size() == b.events.size());
  for (std::size_t j = 0; j < a.events.size(); ++j) {
    REQUIRE(a.events[j].item == b.events[j].item);
    REQUIRE(a.events[j].user == b.events[j].user);
  }
  // seed sensitivity needs a pool with more than one item; the tail side
  // always has several
  REQUIRE(part.tail_items.size() > 1);
  const auto c = synthesize_profiles(split, part, ProfileMode::Unpop, 42);
  const auto d = synthesize_profiles(split, part, ProfileMode::Unpop, 43);
  bool any_diff = false;
  for (std::size_t j = 0; j < c.events.size(); ++j)
    if (c.events[j].item != d.events[j].item) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("synthesize_profiles rejects an empty pool", "[dataset]") {
  const auto split = testutil::split_from_counts({3, 3});
  PopularityPartition part;
  part.counts = {3, 3};
  part.label = {ItemLabel::Head, ItemLabel::Mid};
  part.head_items = {0};
  REQUIRE_THROWS_AS(synthesize_profiles(split, part, ProfileMode::Unpop, 1), DataError);
}

TEST_CASE("generate_powerlaw_dataset concentrates mass on early items", "[dataset]") {
  const auto log = generate_powerlaw_dataset(300, 200, 10, 20, 1.0, 9);
  std::vector<double> counts(log.num_items, 0.0);
  for (const auto& e : log.events) counts[e.item] += 1.0;
  double top_decile = 0.0, total = 0.0;
  for (std::int64_t i = 0; i < log.num_items; ++i) {
    total += counts[i];
    if (i < log.num_items / 10) top_decile += counts[i];
  }
  CHECK(top_decile / total > 0.45);
}

TEST_CASE("generate_powerlaw_dataset skew grows with the exponent", "[dataset]") {
  auto gini_of = [](const InteractionLog& log) {
    std::vector<double> counts(log.num_items, 0.0);
    for (const auto& e : log.events) counts[e.item] += 1.0;
    return gini_from_exposure(counts);
  };
  const auto flat = generate_powerlaw_dataset(200, 150, 5, 15, 0.5, 4);
  const auto steep = generate_powerlaw_dataset(200, 150, 5, 15, 2.0, 4);
  CHECK(gini_of(steep) > gini_of(flat));
}

TEST_CASE("generate_powerlaw_dataset event counts and timestamps", "[dataset]") {
  const auto log = generate_powerlaw_dataset(50, 40, 3, 7, 1.0, 12);
  std::map<std::int64_t, std::vector<std::int64_t>> per_user_ts;
  for (const auto& e : log.events) per_user_ts[e.user].push_back(e.ts);
  REQUIRE(per_user_ts.size() == 50);
  for (const auto& [u, ts] : per_user_ts) {
    REQUIRE(ts.size() >= 3);
    REQUIRE(ts.size() <= 7);
    for (std::size_t j = 0; j < ts.size(); ++j)
      REQUIRE(ts[j] == static_cast<std::int64_t>(j));
  }

  const auto again = generate_powerlaw_dataset(50, 40, 3, 7, 1.0, 12);
  REQUIRE(again.events.size() == log.events.size());
  for (std::size_t j = 0; j < log.events.size(); ++j)
    REQUIRE(again.events[j].item == log.events[j].item);
}

TEST_CASE("generate_powerlaw_dataset validates parameters", "[dataset]") {
  CHECK_THROWS_AS(generate_powerlaw_dataset(5, 40, 3, 7, 1.0, 1), UsageError);
  CHECK_THROWS_AS(generate_powerlaw_dataset(50, 5, 3, 7, 1.0, 1), UsageError);
  CHECK_THROWS_AS(generate_powerlaw_dataset(50, 40, 3, 7, 0.0, 1), UsageError);
  CHECK_THROWS_AS(generate_powerlaw_dataset(50, 40, 8, 7, 1.0, 1), UsageError);
  CHECK_THROWS_AS(generate_powerlaw_dataset(50, 40, 2, 7, 1.0, 1), DataError);
}
