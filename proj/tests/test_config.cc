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

#include "helpers.hpp"
#include "popsteer/config.hpp"

using namespace popsteer;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::MessageMatches;

TEST_CASE("an empty config file yields the documented defaults", "[config]") {
  const auto path = testutil::write_tmp("empty.ini", "");
  const RunConfig c = load_config(path);

  CHECK(c.generate.users == 2000);
  CHECK(c.generate.items == 1500);
  CHECK(c.generate.events_min == 20);
  CHECK(c.generate.events_max == 50);
  CHECK(c.generate.zipf == 1.0);
  CHECK(c.data.kcore == 5);
  CHECK(c.data.head_tail_mass == 0.20);
  CHECK(c.data.synth_seed_pop == 101);
  CHECK(c.data.synth_seed_unpop == 102);

  CHECK(c.backbone.dim == 64);
  CHECK(c.backbone.decay == 0.8);
  CHECK(c.backbone.max_history == 50);
  CHECK(c.backbone.learning_rate == 0.05);
  CHECK(c.backbone.epochs == 30);
  CHECK(c.backbone.negatives == 1);
  CHECK(c.backbone.patience == 10);
  CHECK(c.backbone.seed == 1);

  CHECK(c.sae.scale == 16);
  CHECK(c.sae.k == 32);
  CHECK(c.sae.gamma == 1.0 / 32.0);
  CHECK(c.sae.k_aux == 0);
  CHECK(c.sae.dead_window == 0);
  CHECK(c.sae.learning_rate == 1e-3);
  CHECK(c.sae.epochs == 15);
  CHECK(c.sae.batch == 256);
  CHECK(c.sae.seed == 2);

  CHECK(c.steering.alpha == 1.5);
  CHECK(c.steering.n_select == 512);
  CHECK(c.eval.k == 10);

  CHECK(c.sweep.popsteer_n == std::vector<std::int64_t>{256, 512, 768, 1024});
  CHECK(c.sweep.ipr_alpha == std::vector<double>{0.1, 0.3, 0.5, 0.7, 1.0});
  CHECK(c.sweep.fair_p == std::vector<double>{0.3, 0.5, 0.7, 0.9, 0.99});
  CHECK(c.sweep.fair_alpha_sig == std::vector<double>{0.1});
  CHECK(c.sweep.random_pool == std::vector<int>{15, 30, 50, 75, 100});
  CHECK(c.ablate.xi_grid == std::vector<double>{0.1, 0.25, 0.5, 1.0, 2.0});
  CHECK(c.ablate.noise_seed == 11);
  CHECK(c.deactivate.threshold == 1.0);
  CHECK(c.deactivate.kprime_grid == std::vector<int>{0, 4, 8, 16, 32, 64});
  CHECK(c.out_dir == "out");
  CHECK(c.generates_data());
  CHECK(c.noise_select() == NoiseSelect::Matched);
}

TEST_CASE("values and lists parse from ini sections", "[config]") {
  const auto path = testutil::write_tmp("full.ini",
                                        "[generate]\n"
                                        "users = 120\n"
                                        "zipf = 1.5\n"
                                        "[sae]\n"
                                        "scale = 4\n"
                                        "k = 8\n"
                                        "[sweep]\n"
                                        "popsteer_n = 32, 64 ,128\n"
                                        "methods = popsteer,ipr\n"
                                        "[ablate]\n"
                                        "noise_select = random\n"
                                        "[output]\n"
                                        "dir = /tmp/popsteer_tests/run\n");
  const RunConfig c = load_config(path);
  CHECK(c.generate.users == 120);
  CHECK(c.generate.zipf == 1.5);
  CHECK(c.sae.scale == 4);
  CHECK(c.sae.k == 8);
  CHECK(c.sweep.popsteer_n == std::vector<std::int64_t>{32, 64, 128});
  CHECK(c.sweep.methods == std::vector<std::string>{"popsteer", "ipr"});
  CHECK(c.noise_select() == NoiseSelect::Random);
  CHECK(c.out_dir == "/tmp/popsteer_tests/run");
}

TEST_CASE("unknown and misplaced keys are rejected", "[config]") {
  const auto unknown = testutil::write_tmp("unknown.ini", "[sae]\nsparsity = 3\n");
  REQUIRE_THROWS_MATCHES(load_config(unknown), UsageError,
                         MessageMatches(ContainsSubstring("unknown key 'sae.sparsity'")));

  const auto bare = testutil::write_tmp("bare.ini", "users = 120\n");
  REQUIRE_THROWS_MATCHES(load_config(bare), UsageError,
                         MessageMatches(ContainsSubstring("outside any section")));

  const auto bad_int = testutil::write_tmp("badint.ini", "[generate]\nusers = many\n");
  REQUIRE_THROWS_MATCHES(load_config(bad_int), UsageError,
                         MessageMatches(ContainsSubstring("expects an integer")));

  const auto bad_real = testutil::write_tmp("badreal.ini", "[generate]\nzipf = fast\n");
  REQUIRE_THROWS_MATCHES(load_config(bad_real), UsageError,
                         MessageMatches(ContainsSubstring("expects a number")));
}

TEST_CASE("validation guards parameter domains", "[config]") {
  RunConfig c;
  SECTION("missing input file") {
    c.data.input = "/nonexistent/interactions.tsv";
    REQUIRE_THROWS_MATCHES(validate_config(c), DataError,
                           MessageMatches(ContainsSubstring("data.input file not found")));
  }
  SECTION("sae K must stay below the embedding dim") {
    c.sae.k = 64;
    REQUIRE_THROWS_MATCHES(validate_config(c), UsageError,
                           MessageMatches(ContainsSubstring("sae.k must be < backbone.dim")));
  }
  SECTION("empty sweep grid") {
    c.sweep.ipr_alpha.clear();
    REQUIRE_THROWS_MATCHES(validate_config(c), UsageError,
                           MessageMatches(ContainsSubstring("sweep grids")));
  }
  SECTION("empty kprime grid") {
    c.deactivate.kprime_grid.clear();
    CHECK_THROWS_AS(validate_config(c), UsageError);
  }
  SECTION("unknown sweep method") {
    c.sweep.methods = {"popsteer", "magic"};
    REQUIRE_THROWS_MATCHES(validate_config(c), UsageError,
                           MessageMatches(ContainsSubstring("unknown sweep method 'magic'")));
  }
  SECTION("bad noise_select") {
    c.ablate.noise_select = "alternating";
    REQUIRE_THROWS_MATCHES(validate_config(c), UsageError,
                           MessageMatches(ContainsSubstring("noise_select")));
  }
  SECTION("head_tail_mass out of range") {
    c.data.head_tail_mass = 0.6;
    CHECK_THROWS_AS(validate_config(c), UsageError);
  }
  SECTION("fair_p out of range") {
    c.rerank.fair_p = 1.0;
    CHECK_THROWS_AS(validate_config(c), UsageError);
  }
}

TEST_CASE("fingerprint ignores output location but tracks parameters", "[config]") {
  RunConfig a;
  RunConfig b = a;
  b.out_dir = "/somewhere/else";
  CHECK(config_fingerprint(a) == config_fingerprint(b));

  RunConfig c = a;
  c.sae.k = 16;
  CHECK(config_fingerprint(a) != config_fingerprint(c));

  RunConfig d = a;
  d.sweep.popsteer_alpha = {1.0, 2.0};
  CHECK(config_fingerprint(a) != config_fingerprint(d));

  RunConfig e = a;
  e.generate.seed += 1;
  CHECK(config_fingerprint(a) != config_fingerprint(e));
}
