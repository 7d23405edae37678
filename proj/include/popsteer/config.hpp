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

#include <cstdint>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "popsteer/backbone.hpp"
#include "popsteer/dataset.hpp"
#include "popsteer/io.hpp"
#include "popsteer/sae.hpp"
#include "popsteer/steering.hpp"
#include "popsteer/types.hpp"

namespace popsteer {

struct DataConfig {
  std::string input;  // empty: use the [generate] section instead
  std::string format = "tsv";
  int kcore = 5;
  double head_tail_mass = 0.20;
  std::uint64_t synth_seed_pop = 101;
  std::uint64_t synth_seed_unpop = 102;
};

struct GenerateConfig {
  std::int64_t users = 2000;
  std::int64_t items = 1500;
  std::int64_t events_min = 20;
  std::int64_t events_max = 50;
  double zipf = 1.0;
  std::uint64_t seed = 42;
};

struct SaeConfig {
  int scale = 16;
  int k = 32;
  double gamma = 1.0 / 32.0;
  int k_aux = 0;                 // 0: defaults to 2*K
  std::int64_t dead_window = 0;  // 0: defaults to 10*batch
  double learning_rate = 1e-3;
  int epochs = 15;
  int batch = 256;
  std::uint64_t seed = 2;
};

struct SteeringConfig {
  double alpha = 1.5;
  std::int64_t n_select = 512;
};

struct RerankDefaults {
  double ipr_alpha = 0.5;
  double fair_p = 0.5;
  double fair_alpha_sig = 0.1;
  int fair_pool = 500;
  int random_pool = 100;
  std::uint64_t random_seed = 7;
};

struct SweepConfig {
  std::vector<std::string> methods = {"popsteer", "ipr", "fair", "random"};
  std::vector<double> popsteer_alpha = {1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0};
  std::vector<std::int64_t> popsteer_n = {256, 512, 768, 1024};
  std::vector<double> ipr_alpha = {0.1, 0.3, 0.5, 0.7, 1.0};
  std::vector<double> fair_p = {0.3, 0.5, 0.7, 0.9, 0.99};
  std::vector<double> fair_alpha_sig = {0.1};
  std::vector<int> random_pool = {15, 30, 50, 75, 100};
};

struct AblateConfig {
  std::vector<std::int64_t> n_grid = {256, 512, 768, 1024};
  std::vector<double> alpha_grid = {1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0};
  std::vector<double> xi_grid = {0.1, 0.25, 0.5, 1.0, 2.0};
  std::uint64_t noise_seed = 11;
  std::string noise_select = "matched";
};

struct DeactivateConfig {
  double threshold = 1.0;
  std::vector<int> kprime_grid = {0, 4, 8, 16, 32, 64};
};

struct EvalConfig {
  int k = 10;
};

struct RunConfig {
  DataConfig data;
  GenerateConfig generate;
  BackboneConfig backbone;
  SaeConfig sae;
  SteeringConfig steering;
  RerankDefaults rerank;
  EvalConfig eval;
  SweepConfig sweep;
  AblateConfig ablate;
  DeactivateConfig deactivate;
  std::string out_dir = "out";

  bool generates_data() const { return data.input.empty(); }
  NoiseSelect noise_select() const {
    if (ablate.noise_select == "matched") return NoiseSelect::Matched;
    if (ablate.noise_select == "random") return NoiseSelect::Random;
    throw UsageError("config: ablate.noise_select must be 'matched' or 'random'");
  }
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(value);
  while (std::getline(ss, item, ',')) {
    const auto lo = item.find_first_not_of(" \t");
    if (lo == std::string::npos) continue;
    const auto hi = item.find_last_not_of(" \t");
    out.push_back(item.substr(lo, hi - lo + 1));
  }
  return out;
}

// Typed readers over the flattened "section.key" -> value map; consumed keys
// are erased so leftovers can be reported as unknown.
class ConfigReader {
public:
  explicit ConfigReader(std::map<std::string, std::string> values)
      : values_(std::move(values)) {}

  void str(const std::string& key, std::string& out) {
    if (auto it = values_.find(key); it != values_.end()) {
      out = it->second;
      values_.erase(it);
    }
  }

  template <typename T>
  void integer(const std::string& key, T& out) {
    std::string raw;
    str(key, raw);
    if (raw.empty()) return;
    out = parse_integer<T>(key, raw);
  }

  void real(const std::string& key, double& out) {
    std::string raw;
    str(key, raw);
    if (raw.empty()) return;
    out = parse_real(key, raw);
  }

  void real_list(const std::string& key, std::vector<double>& out) {
    std::string raw;
    str(key, raw);
    if (raw.empty()) return;
    out.clear();
    for (const std::string& tok : split_list(raw)) out.push_back(parse_real(key, tok));
  }

  template <typename T>
  void integer_list(const std::string& key, std::vector<T>& out) {
    std::string raw;
    str(key, raw);
    if (raw.empty()) return;
    out.clear();
    for (const std::string& tok : split_list(raw)) out.push_back(parse_integer<T>(key, tok));
  }

  void str_list(const std::string& key, std::vector<std::string>& out) {
    std::string raw;
    str(key, raw);
    if (raw.empty()) return;
    out = split_list(raw);
  }

  void finish() const {
    if (!values_.empty())
      throw UsageError("config: unknown key '" + values_.begin()->first + "'");
  }

private:
  template <typename T>
  static T parse_integer(const std::string& key, const std::string& raw) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(raw, &used);
      if (used != raw.size()) throw std::invalid_argument(raw);
      return static_cast<T>(v);
    } catch (const std::exception&) {
      throw UsageError("config: key '" + key + "' expects an integer, got '" + raw + "'");
    }
  }

  static double parse_real(const std::string& key, const std::string& raw) {
    try {
      std::size_t used = 0;
      const double v = std::stod(raw, &used);
      if (used != raw.size()) throw std::invalid_argument(raw);
      return v;
    } catch (const std::exception&) {
      throw UsageError("config: key '" + key + "' expects a number, got '" + raw + "'");
    }
  }

  std::map<std::string, std::string> values_;
};

}  // namespace detail

inline void validate_config(const RunConfig& c) {
  if (c.data.kcore < 1) throw UsageError("config: data.kcore must be >= 1");
  if (!(c.data.head_tail_mass > 0.0 && c.data.head_tail_mass <= 0.5))
    throw UsageError("config: data.head_tail_mass must be in (0, 0.5]");
  parse_format(c.data.format);
  if (!c.data.input.empty() && !std::filesystem::exists(c.data.input))
    throw DataError("config: data.input file not found: " + c.data.input);

  if (c.backbone.dim < 1) throw UsageError("config: backbone.dim must be >= 1");
  if (!(c.backbone.decay > 0.0)) throw UsageError("config: backbone.decay must be > 0");
  if (c.backbone.max_history < 1) throw UsageError("config: backbone.max_history must be >= 1");
  if (c.backbone.epochs < 0) throw UsageError("config: backbone.epochs must be >= 0");
  if (c.backbone.negatives < 1) throw UsageError("config: backbone.negatives must be >= 1");
  if (c.backbone.patience < 1) throw UsageError("config: backbone.patience must be >= 1");

  if (c.sae.scale < 1) throw UsageError("config: sae.scale must be >= 1");
  if (c.sae.k < 1) throw UsageError("config: sae.k must be >= 1");
  if (c.sae.k >= c.backbone.dim) throw UsageError("config: sae.k must be < backbone.dim");
  if (c.sae.epochs < 0) throw UsageError("config: sae.epochs must be >= 0");
  if (c.sae.batch < 1) throw UsageError("config: sae.batch must be >= 1");

  if (c.steering.alpha < 0) throw UsageError("config: steering.alpha must be >= 0");
  if (c.steering.n_select < 0) throw UsageError("config: steering.n_select must be >= 0");

  if (!(c.rerank.fair_p > 0.0 && c.rerank.fair_p < 1.0))
    throw UsageError("config: rerank.fair_p must be in (0,1)");
  if (!(c.rerank.fair_alpha_sig > 0.0 && c.rerank.fair_alpha_sig < 1.0))
    throw UsageError("config: rerank.fair_alpha_sig must be in (0,1)");
  if (c.rerank.fair_pool < 1 || c.rerank.random_pool < 1)
    throw UsageError("config: rerank pools must be >= 1");
  if (c.eval.k < 1) throw UsageError("config: eval.k must be >= 1");

  if (c.sweep.methods.empty()) throw UsageError("config: sweep.methods must be non-empty");
  for (const std::string& m : c.sweep.methods)
    if (m != "popsteer" && m != "ipr" && m != "fair" && m != "random")
      throw UsageError("config: unknown sweep method '" + m + "'");
  if (c.sweep.popsteer_alpha.empty() || c.sweep.popsteer_n.empty() ||
      c.sweep.ipr_alpha.empty() || c.sweep.fair_p.empty() || c.sweep.fair_alpha_sig.empty() ||
      c.sweep.random_pool.empty())
    throw UsageError("config: sweep grids must be non-empty");

  if (c.ablate.n_grid.empty() || c.ablate.alpha_grid.empty() || c.ablate.xi_grid.empty())
    throw UsageError("config: ablate grids must be non-empty");
  if (c.deactivate.kprime_grid.empty())
    throw UsageError("config: deactivate.kprime_grid must be non-empty");
  if (c.deactivate.threshold < 0) throw UsageError("config: deactivate.threshold must be >= 0");
  if (c.out_dir.empty()) throw UsageError("config: output.dir must be non-empty");
  c.noise_select();
}

inline RunConfig load_config(const std::string& path) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::ini_parser::read_ini(path, tree);
  } catch (const pt::ini_parser_error& e) {
    throw DataError("config: " + std::string(e.what()));
  }

  std::map<std::string, std::string> flat;
  for (const auto& section : tree) {
    if (section.second.empty())
      throw UsageError("config: key '" + section.first + "' appears outside any section");
    for (const auto& kv : section.second)
      flat[section.first + "." + kv.first] = kv.second.get_value<std::string>();
  }

  RunConfig c;
  detail::ConfigReader r(std::move(flat));
  r.str("data.input", c.data.input);
  r.str("data.format", c.data.format);
  r.integer("data.kcore", c.data.kcore);
  r.real("data.head_tail_mass", c.data.head_tail_mass);
  r.integer("data.synth_seed_pop", c.data.synth_seed_pop);
  r.integer("data.synth_seed_unpop", c.data.synth_seed_unpop);

  r.integer("generate.users", c.generate.users);
  r.integer("generate.items", c.generate.items);
  r.integer("generate.events_min", c.generate.events_min);
  r.integer("generate.events_max", c.generate.events_max);
  r.real("generate.zipf", c.generate.zipf);
  r.integer("generate.seed", c.generate.seed);

  r.integer("backbone.dim", c.backbone.dim);
  r.real("backbone.decay", c.backbone.decay);
  r.integer("backbone.max_history", c.backbone.max_history);
  r.real("backbone.learning_rate", c.backbone.learning_rate);
  r.integer("backbone.epochs", c.backbone.epochs);
  r.integer("backbone.negatives", c.backbone.negatives);
  r.integer("backbone.patience", c.backbone.patience);
  r.integer("backbone.seed", c.backbone.seed);

  r.integer("sae.scale", c.sae.scale);
  r.integer("sae.k", c.sae.k);
  r.real("sae.gamma", c.sae.gamma);
  r.integer("sae.k_aux", c.sae.k_aux);
  r.integer("sae.dead_window", c.sae.dead_window);
  r.real("sae.learning_rate", c.sae.learning_rate);
  r.integer("sae.epochs", c.sae.epochs);
  r.integer("sae.batch", c.sae.batch);
  r.integer("sae.seed", c.sae.seed);

  r.real("steering.alpha", c.steering.alpha);
  r.integer("steering.n_select", c.steering.n_select);

  r.real("rerank.ipr_alpha", c.rerank.ipr_alpha);
  r.real("rerank.fair_p", c.rerank.fair_p);
  r.real("rerank.fair_alpha_sig", c.rerank.fair_alpha_sig);
  r.integer("rerank.fair_pool", c.rerank.fair_pool);
  r.integer("rerank.random_pool", c.rerank.random_pool);
  r.integer("rerank.random_seed", c.rerank.random_seed);

  r.integer("eval.k", c.eval.k);

  r.str_list("sweep.methods", c.sweep.methods);
  r.real_list("sweep.popsteer_alpha", c.sweep.popsteer_alpha);
  r.integer_list("sweep.popsteer_n", c.sweep.popsteer_n);
  r.real_list("sweep.ipr_alpha", c.sweep.ipr_alpha);
  r.real_list("sweep.fair_p", c.sweep.fair_p);
  r.real_list("sweep.fair_alpha_sig", c.sweep.fair_alpha_sig);
  r.integer_list("sweep.random_pool", c.sweep.random_pool);

  r.integer_list("ablate.n_grid", c.ablate.n_grid);
  r.real_list("ablate.alpha_grid", c.ablate.alpha_grid);
  r.real_list("ablate.xi_grid", c.ablate.xi_grid);
  r.integer("ablate.noise_seed", c.ablate.noise_seed);
  r.str("ablate.noise_select", c.ablate.noise_select);

  r.real("deactivate.threshold", c.deactivate.threshold);
  r.integer_list("deactivate.kprime_grid", c.deactivate.kprime_grid);

  r.str("output.dir", c.out_dir);
  r.finish();

  validate_config(c);
  return c;
}

// Stable fingerprint of everything that can influence results. The output
// directory is excluded on purpose: runs into different directories (or with
// different thread counts) must produce byte-identical artifacts.
inline std::uint64_t config_fingerprint(const RunConfig& c) {
  std::ostringstream s;
  auto reals = [&](const std::vector<double>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << fmt_exact(v[i]);
    s << '\n';
  };
  auto ints = [&](const auto& v) {
    for (std::size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
    s << '\n';
  };
  s << "data.input=" << c.data.input << '\n'
    << "data.format=" << c.data.format << '\n'
    << "data.kcore=" << c.data.kcore << '\n'
    << "data.head_tail_mass=" << fmt_exact(c.data.head_tail_mass) << '\n'
    << "data.synth_seed_pop=" << c.data.synth_seed_pop << '\n'
    << "data.synth_seed_unpop=" << c.data.synth_seed_unpop << '\n'
    << "generate.users=" << c.generate.users << '\n'
    << "generate.items=" << c.generate.items << '\n'
    << "generate.events_min=" << c.generate.events_min << '\n'
    << "generate.events_max=" << c.generate.events_max << '\n'
    << "generate.zipf=" << fmt_exact(c.generate.zipf) << '\n'
    << "generate.seed=" << c.generate.seed << '\n'
    << "backbone.dim=" << c.backbone.dim << '\n'
    << "backbone.decay=" << fmt_exact(c.backbone.decay) << '\n'
    << "backbone.max_history=" << c.backbone.max_history << '\n'
    << "backbone.learning_rate=" << fmt_exact(c.backbone.learning_rate) << '\n'
    << "backbone.epochs=" << c.backbone.epochs << '\n'
    << "backbone.negatives=" << c.backbone.negatives << '\n'
    << "backbone.patience=" << c.backbone.patience << '\n'
    << "backbone.seed=" << c.backbone.seed << '\n'
    << "sae.scale=" << c.sae.scale << '\n'
    << "sae.k=" << c.sae.k << '\n'
    << "sae.gamma=" << fmt_exact(c.sae.gamma) << '\n'
    << "sae.k_aux=" << c.sae.k_aux << '\n'
    << "sae.dead_window=" << c.sae.dead_window << '\n'
    << "sae.learning_rate=" << fmt_exact(c.sae.learning_rate) << '\n'
    << "sae.epochs=" << c.sae.epochs << '\n'
    << "sae.batch=" << c.sae.batch << '\n'
    << "sae.seed=" << c.sae.seed << '\n'
    << "steering.alpha=" << fmt_exact(c.steering.alpha) << '\n'
    << "steering.n_select=" << c.steering.n_select << '\n'
    << "rerank.ipr_alpha=" << fmt_exact(c.rerank.ipr_alpha) << '\n'
    << "rerank.fair_p=" << fmt_exact(c.rerank.fair_p) << '\n'
    << "rerank.fair_alpha_sig=" << fmt_exact(c.rerank.fair_alpha_sig) << '\n'
    << "rerank.fair_pool=" << c.rerank.fair_pool << '\n'
    << "rerank.random_pool=" << c.rerank.random_pool << '\n'
    << "rerank.random_seed=" << c.rerank.random_seed << '\n'
    << "eval.k=" << c.eval.k << '\n';
  s << "sweep.methods=";
  ints(c.sweep.methods);
  s << "sweep.popsteer_alpha=";
  reals(c.sweep.popsteer_alpha);
  s << "sweep.popsteer_n=";
  ints(c.sweep.popsteer_n);
  s << "sweep.ipr_alpha=";
  reals(c.sweep.ipr_alpha);
  s << "sweep.fair_p=";
  reals(c.sweep.fair_p);
  s << "sweep.fair_alpha_sig=";
  reals(c.sweep.fair_alpha_sig);
  s << "sweep.random_pool=";
  ints(c.sweep.random_pool);
  s << "ablate.n_grid=";
  ints(c.ablate.n_grid);
  s << "ablate.alpha_grid=";
  reals(c.ablate.alpha_grid);
  s << "ablate.xi_grid=";
  reals(c.ablate.xi_grid);
  s << "ablate.noise_seed=" << c.ablate.noise_seed << '\n'
    << "ablate.noise_select=" << c.ablate.noise_select << '\n'
    << "deactivate.threshold=" << fmt_exact(c.deactivate.threshold) << '\n';
  s << "deactivate.kprime_grid=";
  ints(c.deactivate.kprime_grid);
  return fnv1a64(s.str());
}

}  // namespace popsteer
