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
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "popsteer/backbone.hpp"
#include "popsteer/config.hpp"
#include "popsteer/dataset.hpp"
#include "popsteer/eval.hpp"
#include "popsteer/io.hpp"
#include "popsteer/metrics.hpp"
#include "popsteer/rerank.hpp"
#include "popsteer/sae.hpp"
#include "popsteer/steering.hpp"
#include "popsteer/types.hpp"

namespace popsteer {

// ---------------------------------------------------------------------------
// Artifact paths and loaders. Every text artifact starts with
//   # popsteer <name> v1 config=<hash>
// and loaders reject files whose name/version line does not match.
// ---------------------------------------------------------------------------

inline std::string artifact_path(const RunConfig& c, const std::string& name) {
  return (std::filesystem::path(c.out_dir) / name).string();
}

inline void require_artifact(const std::string& path, const std::string& producer) {
  if (!std::filesystem::exists(path))
    throw DataError("missing artifact: " + path + " (run `popsteer " + producer + "` first)");
}

namespace detail {

inline std::string label_name(ItemLabel label) {
  switch (label) {
    case ItemLabel::Head: return "head";
    case ItemLabel::Tail: return "tail";
    default: return "mid";
  }
}

inline ItemLabel parse_label(const std::string& s, const std::string& path) {
  if (s == "head") return ItemLabel::Head;
  if (s == "tail") return ItemLabel::Tail;
  if (s == "mid") return ItemLabel::Mid;
  throw DataError("unknown item label '" + s + "' in " + path);
}

// Reads a "# users=U items=M" style metadata comment.
inline void read_meta(std::istream& in, const std::string& path, std::int64_t& users,
                      std::int64_t& items) {
  std::string line;
  if (!std::getline(in, line) ||
      std::sscanf(line.c_str(), "# users=%lld items=%lld", (long long*)&users,
                  (long long*)&items) != 2)
    throw DataError("malformed metadata line in " + path);
}

inline void expect_header(std::istream& in, const std::string& expected,
                          const std::string& path) {
  std::string line;
  if (!std::getline(in, line) || line != expected)
    throw DataError("unexpected column header in " + path);
}

}  // namespace detail

inline void save_event_log(const InteractionLog& log, const std::string& path,
                           const std::string& name, std::uint64_t hash) {
  std::ofstream out = open_artifact(path, name, hash);
  out << "# users=" << log.num_users << " items=" << log.num_items << '\n';
  out << "user\titem\tts\n";
  for (const Interaction& e : log.events)
    out << e.user << '\t' << e.item << '\t' << e.ts << '\n';
  if (!out) throw DataError("write failed: " + path);
}

inline InteractionLog load_event_log(const std::string& path, const std::string& name) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  expect_artifact(in, name, path);
  InteractionLog log;
  detail::read_meta(in, path, log.num_users, log.num_items);
  detail::expect_header(in, "user\titem\tts", path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    Interaction e{};
    if (!(ss >> e.user >> e.item >> e.ts)) throw DataError("malformed row in " + path);
    log.events.push_back(e);
  }
  return log;
}

inline void save_splits(const SplitBundle& split, const std::string& path,
                        std::uint64_t hash) {
  std::ofstream out = open_artifact(path, "splits", hash);
  out << "# users=" << split.num_users << " items=" << split.num_items << '\n';
  out << "user\titem\tts\trole\n";
  for (std::int64_t u = 0; u < split.num_users; ++u) {
    for (std::size_t j = 0; j < split.train_items[u].size(); ++j)
      out << u << '\t' << split.train_items[u][j] << '\t' << split.train_ts[u][j]
          << "\ttrain\n";
    out << u << '\t' << split.valid_item[u] << '\t' << split.valid_ts[u] << "\tvalid\n";
    out << u << '\t' << split.test_item[u] << '\t' << split.test_ts[u] << "\ttest\n";
  }
  if (!out) throw DataError("write failed: " + path);
}

inline SplitBundle load_splits(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  expect_artifact(in, "splits", path);
  SplitBundle split;
  detail::read_meta(in, path, split.num_users, split.num_items);
  detail::expect_header(in, "user\titem\tts\trole", path);
  split.train_items.resize(split.num_users);
  split.train_ts.resize(split.num_users);
  split.valid_item.assign(split.num_users, -1);
  split.valid_ts.assign(split.num_users, 0);
  split.test_item.assign(split.num_users, -1);
  split.test_ts.assign(split.num_users, 0);

  std::string line, role;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::int64_t u, item, ts;
    if (!(ss >> u >> item >> ts >> role)) throw DataError("malformed row in " + path);
    if (u < 0 || u >= split.num_users || item < 0 || item >= split.num_items)
      throw DataError("out-of-range ids in " + path);
    if (role == "train") {
      split.train_items[u].push_back(item);
      split.train_ts[u].push_back(ts);
    } else if (role == "valid") {
      split.valid_item[u] = item;
      split.valid_ts[u] = ts;
    } else if (role == "test") {
      split.test_item[u] = item;
      split.test_ts[u] = ts;
    } else {
      throw DataError("unknown split role '" + role + "' in " + path);
    }
  }
  for (std::int64_t u = 0; u < split.num_users; ++u)
    if (split.train_items[u].empty() || split.valid_item[u] < 0 || split.test_item[u] < 0)
      throw DataError("incomplete split for user " + std::to_string(u) + " in " + path);
  return split;
}

inline void save_partition(const PopularityPartition& part, const std::string& path,
                           std::uint64_t hash) {
  std::ofstream out = open_artifact(path, "partition", hash);
  out << "item_id\tcount\tlabel\n";
  for (std::size_t i = 0; i < part.counts.size(); ++i)
    out << i << '\t' << part.counts[i] << '\t' << detail::label_name(part.label[i]) << '\n';
  if (!out) throw DataError("write failed: " + path);
}

inline PopularityPartition load_partition(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  expect_artifact(in, "partition", path);
  detail::expect_header(in, "item_id\tcount\tlabel", path);

  PopularityPartition part;
  std::string line, label;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::int64_t id, count;
    if (!(ss >> id >> count >> label)) throw DataError("malformed row in " + path);
    if (id != static_cast<std::int64_t>(part.counts.size()))
      throw DataError("non-contiguous item ids in " + path);
    part.counts.push_back(count);
    part.label.push_back(detail::parse_label(label, path));
  }
  if (part.counts.empty()) throw DataError("no rows in " + path);

  double total = 0.0, head = 0.0, tail = 0.0;
  for (std::size_t i = 0; i < part.counts.size(); ++i) {
    total += static_cast<double>(part.counts[i]);
    if (part.label[i] == ItemLabel::Head) {
      part.head_items.push_back(static_cast<std::int64_t>(i));
      head += static_cast<double>(part.counts[i]);
    } else if (part.label[i] == ItemLabel::Tail) {
      part.tail_items.push_back(static_cast<std::int64_t>(i));
      tail += static_cast<double>(part.counts[i]);
    }
  }
  if (total <= 0.0) throw DataError("empty exposure counts in " + path);
  part.head_mass = head / total;
  part.tail_mass = tail / total;
  return part;
}

inline void save_idmap(const std::vector<std::int64_t>& ids, const std::string& path,
                       const std::string& name, std::uint64_t hash) {
  std::ofstream out = open_artifact(path, name, hash);
  out << "dense_id\toriginal_id\n";
  for (std::size_t i = 0; i < ids.size(); ++i) out << i << '\t' << ids[i] << '\n';
  if (!out) throw DataError("write failed: " + path);
}

inline void save_exposure(const std::vector<double>& exposure,
                          const PopularityPartition& part, const std::string& path,
                          std::uint64_t hash) {
  std::ofstream out = open_artifact(path, "exposure", hash);
  out << "item_id\texposure\tlabel\n";
  for (std::size_t i = 0; i < exposure.size(); ++i)
    out << i << '\t' << static_cast<std::int64_t>(exposure[i]) << '\t'
        << detail::label_name(part.label[i]) << '\n';
  if (!out) throw DataError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Commands.
// ---------------------------------------------------------------------------

inline void cmd_prepare(const RunConfig& config) {
  std::filesystem::create_directories(config.out_dir);
  const std::uint64_t hash = config_fingerprint(config);

  InteractionLog raw;
  std::vector<std::int64_t> user_origin, item_origin;
  if (config.generates_data()) {
    raw = generate_powerlaw_dataset(config.generate.users, config.generate.items,
                                    config.generate.events_min, config.generate.events_max,
                                    config.generate.zipf, config.generate.seed);
    save_event_log(raw, artifact_path(config, "dataset.tsv"), "dataset", hash);
    user_origin.resize(raw.num_users);
    item_origin.resize(raw.num_items);
    for (std::int64_t u = 0; u < raw.num_users; ++u) user_origin[u] = u;
    for (std::int64_t i = 0; i < raw.num_items; ++i) item_origin[i] = i;
  } else {
    LoadedLog loaded = load_interactions(config.data.input, parse_format(config.data.format));
    raw = std::move(loaded.log);
    user_origin = std::move(loaded.mapping.users);
    item_origin = std::move(loaded.mapping.items);
  }

  KcoreResult kc = kcore_filter(raw, config.data.kcore);
  std::vector<std::int64_t> users_final(kc.log.num_users), items_final(kc.log.num_items);
  for (std::int64_t u = 0; u < kc.log.num_users; ++u) users_final[u] = user_origin[kc.user_ids[u]];
  for (std::int64_t i = 0; i < kc.log.num_items; ++i) items_final[i] = item_origin[kc.item_ids[i]];
  save_idmap(users_final, artifact_path(config, "idmap_users.tsv"), "idmap_users", hash);
  save_idmap(items_final, artifact_path(config, "idmap_items.tsv"), "idmap_items", hash);

  const DatasetStats stats = dataset_stats(kc.log);
  {
    std::ofstream out = open_artifact(artifact_path(config, "summary.tsv"), "summary", hash);
    out << "users\titems\tinteractions\tdensity\n";
    out << stats.users << '\t' << stats.items << '\t' << stats.events << '\t'
        << fmt_metric(stats.density) << '\n';
    if (!out) throw DataError("write failed: summary.tsv");
  }

  const SplitBundle split = chronological_split(kc.log);
  save_splits(split, artifact_path(config, "splits.tsv"), hash);

  const PopularityPartition part = partition_popularity(split, config.data.head_tail_mass);
  save_partition(part, artifact_path(config, "partition.tsv"), hash);

  const InteractionLog pop =
      synthesize_profiles(split, part, ProfileMode::Pop, config.data.synth_seed_pop);
  const InteractionLog unpop =
      synthesize_profiles(split, part, ProfileMode::Unpop, config.data.synth_seed_unpop);
  save_event_log(pop, artifact_path(config, "profiles_pop.tsv"), "profiles_pop", hash);
  save_event_log(unpop, artifact_path(config, "profiles_unpop.tsv"), "profiles_unpop", hash);
}

inline void cmd_train_backbone(const RunConfig& config) {
  const std::string splits_path = artifact_path(config, "splits.tsv");
  require_artifact(splits_path, "prepare");
  const SplitBundle split = load_splits(splits_path);
  const BackboneModel model = train_backbone(split, config.backbone);
  save_backbone(model, artifact_path(config, "backbone.bin"));
}

// One embedding per training-sequence prefix of length >= 2, in user order.
inline std::vector<Vector> embedding_stream(const BackboneModel& model,
                                            const SplitBundle& split) {
  std::vector<Vector> stream;
  std::vector<std::int64_t> prefix;
  for (std::int64_t u = 0; u < split.num_users; ++u) {
    const auto& seq = split.train_items[u];
    for (std::size_t t = 2; t <= seq.size(); ++t) {
      prefix.assign(seq.begin(), seq.begin() + t);
      stream.push_back(model.user_embedding(prefix));
    }
  }
  if (stream.empty()) throw DataError("embedding stream is empty: training prefixes too short");
  return stream;
}

inline void cmd_train_sae(const RunConfig& config) {
  const std::string splits_path = artifact_path(config, "splits.tsv");
  const std::string backbone_path = artifact_path(config, "backbone.bin");
  require_artifact(splits_path, "prepare");
  require_artifact(backbone_path, "train-backbone");
  const SplitBundle split = load_splits(splits_path);
  const BackboneModel backbone = load_backbone(backbone_path);

  SaeModel sae = init_sae(backbone.dim(), config.sae.scale, config.sae.k, config.sae.seed);
  sae.gamma = config.sae.gamma;
  if (config.sae.k_aux > 0) sae.k_aux = config.sae.k_aux;
  sae.dead_window = config.sae.dead_window;

  const std::vector<Vector> stream = embedding_stream(backbone, split);
  SaeTrainConfig train;
  train.learning_rate = config.sae.learning_rate;
  train.epochs = config.sae.epochs;
  train.batch_size = config.sae.batch;
  train.seed = derive_seed(config.sae.seed, 1);
  sae = train_sae(std::move(sae), stream, train);
  save_sae(sae, artifact_path(config, "sae.bin"));

  const ReconstructionReport report = reconstruction_report(sae, stream);
  std::ofstream out = open_artifact(artifact_path(config, "sae_report.tsv"), "sae_report",
                                    config_fingerprint(config));
  out << "normalized_mse\tdead_fraction\tmean_active\n";
  out << fmt_exact(report.normalized_mse) << '\t' << fmt_exact(report.dead_fraction) << '\t'
      << fmt_exact(report.mean_active) << '\n';
  if (!out) throw DataError("write failed: sae_report.tsv");
}

inline void cmd_analyze(const RunConfig& config, int threads = 1) {
  const std::string backbone_path = artifact_path(config, "backbone.bin");
  const std::string sae_path = artifact_path(config, "sae.bin");
  const std::string pop_path = artifact_path(config, "profiles_pop.tsv");
  const std::string unpop_path = artifact_path(config, "profiles_unpop.tsv");
  require_artifact(backbone_path, "train-backbone");
  require_artifact(sae_path, "train-sae");
  require_artifact(pop_path, "prepare");
  require_artifact(unpop_path, "prepare");

  const BackboneModel backbone = load_backbone(backbone_path);
  const SaeModel sae = load_sae(sae_path);
  const InteractionLog pop = load_event_log(pop_path, "profiles_pop");
  const InteractionLog unpop = load_event_log(unpop_path, "profiles_unpop");
  const NeuronStats stats = collect_activation_stats(sae, backbone, pop, unpop, threads);
  save_neuron_stats(stats, artifact_path(config, "neuron_stats.tsv"),
                    config_fingerprint(config));
}

namespace detail {

struct LoadedPipeline {
  BackboneModel backbone;
  SaeModel sae;
  NeuronStats stats;
  SplitBundle split;
  PopularityPartition partition;
};

inline LoadedPipeline load_pipeline(const RunConfig& config) {
  const std::string backbone_path = artifact_path(config, "backbone.bin");
  const std::string sae_path = artifact_path(config, "sae.bin");
  const std::string stats_path = artifact_path(config, "neuron_stats.tsv");
  const std::string splits_path = artifact_path(config, "splits.tsv");
  const std::string part_path = artifact_path(config, "partition.tsv");
  require_artifact(backbone_path, "train-backbone");
  require_artifact(sae_path, "train-sae");
  require_artifact(stats_path, "analyze");
  require_artifact(splits_path, "prepare");
  require_artifact(part_path, "prepare");

  LoadedPipeline p;
  p.backbone = load_backbone(backbone_path);
  p.sae = load_sae(sae_path);
  p.stats = load_neuron_stats(stats_path);
  p.split = load_splits(splits_path);
  p.partition = load_partition(part_path);
  return p;
}

inline void write_report_row(std::ostream& out, const std::string& method,
                             const std::string& params, const EvalReport& report) {
  out << method << ',' << params << ',' << fmt_exact(report.ndcg) << ','
      << fmt_exact(report.lt_coverage) << ',' << fmt_exact(report.gini) << '\n';
}

}  // namespace detail

inline void cmd_steer_eval(const RunConfig& config, int threads = 1) {
  const detail::LoadedPipeline p = detail::load_pipeline(config);
  const std::uint64_t hash = config_fingerprint(config);
  const int k = config.eval.k;

  const SteeringPlan plan =
      build_steering_plan(p.stats, config.steering.alpha, config.steering.n_select);
  save_steering_plan(plan, artifact_path(config, "steering_plan.tsv"), hash);

  RecPath raw;
  RecPath recon;
  recon.kind = RecPath::Kind::Reconstruction;
  recon.sae = &p.sae;
  RecPath steered;
  steered.kind = RecPath::Kind::Steered;
  steered.sae = &p.sae;
  steered.plan = &plan;

  const EvalReport raw_report = evaluate_pipeline(p.backbone, raw, p.split, p.partition, k, threads);
  const EvalReport recon_report =
      evaluate_pipeline(p.backbone, recon, p.split, p.partition, k, threads);
  const EvalReport steered_report =
      evaluate_pipeline(p.backbone, steered, p.split, p.partition, k, threads);

  std::ofstream out = open_artifact(artifact_path(config, "report.csv"), "report", hash);
  out << "method,params,ndcg,lt_coverage,gini\n";
  detail::write_report_row(out, "raw", "-", raw_report);
  detail::write_report_row(out, "reconstruction", "-", recon_report);
  const std::string params = "alpha=" + fmt_exact(config.steering.alpha) +
                             ";n=" + std::to_string(config.steering.n_select);
  detail::write_report_row(out, "popsteer", params, steered_report);
  if (!out) throw DataError("write failed: report.csv");

  save_exposure(raw_report.exposure, p.partition, artifact_path(config, "exposure_raw.tsv"),
                hash);
  save_exposure(steered_report.exposure, p.partition,
                artifact_path(config, "exposure_popsteer.tsv"), hash);
}

inline void cmd_sweep(const RunConfig& config, int threads = 1) {
  const detail::LoadedPipeline p = detail::load_pipeline(config);
  const std::uint64_t hash = config_fingerprint(config);
  const int k = config.eval.k;

  std::ofstream out = open_artifact(artifact_path(config, "frontier.csv"), "frontier", hash);
  out << "method,params,ndcg,lt_coverage,gini\n";

  auto run_row = [&](const std::string& method, const std::string& params,
                     const RecPath& path) {
    try {
      const EvalReport report = evaluate_pipeline(p.backbone, path, p.split, p.partition, k, threads);
      detail::write_report_row(out, method, params, report);
    } catch (const std::exception& e) {
      std::cerr << "sweep: skipping " << method << " (" << params << "): " << e.what() << '\n';
    }
  };

  for (const std::string& method : config.sweep.methods) {
    if (method == "popsteer") {
      for (double alpha : config.sweep.popsteer_alpha) {
        for (std::int64_t n : config.sweep.popsteer_n) {
          const SteeringPlan plan = build_steering_plan(p.stats, alpha, n);
          RecPath path;
          path.kind = RecPath::Kind::Steered;
          path.sae = &p.sae;
          path.plan = &plan;
          run_row("popsteer", "alpha=" + fmt_exact(alpha) + ";n=" + std::to_string(n), path);
        }
      }
    } else if (method == "ipr") {
      for (double alpha : config.sweep.ipr_alpha) {
        RecPath path;
        path.kind = RecPath::Kind::Ipr;
        path.ipr_alpha = alpha;
        run_row("ipr", "alpha=" + fmt_exact(alpha), path);
      }
    } else if (method == "fair") {
      for (double pr : config.sweep.fair_p) {
        for (double sig : config.sweep.fair_alpha_sig) {
          RecPath path;
          path.kind = RecPath::Kind::Fair;
          path.fair_p = pr;
          path.fair_alpha_sig = sig;
          path.fair_pool = config.rerank.fair_pool;
          run_row("fair",
                  "p=" + fmt_exact(pr) + ";alpha_sig=" + fmt_exact(sig) +
                      ";pool=" + std::to_string(config.rerank.fair_pool),
                  path);
        }
      }
    } else if (method == "random") {
      for (int pool : config.sweep.random_pool) {
        RecPath path;
        path.kind = RecPath::Kind::Random;
        path.random_pool = pool;
        path.random_seed = config.rerank.random_seed;
        run_row("random", "pool=" + std::to_string(pool), path);
      }
    }
  }
  if (!out) throw DataError("write failed: frontier.csv");
}

namespace detail {

// Largest grid value whose nDCG stays within a 10% drop of the raw backbone
// at every n_select in the grid; falls back to the smallest value when none
// qualifies.
template <typename EvalFn>
double tune_strength(std::vector<double> grid, const std::vector<std::int64_t>& n_grid,
                     double raw_ndcg, EvalFn eval_at,
                     std::map<std::pair<double, std::int64_t>, EvalReport>& cache) {
  std::sort(grid.begin(), grid.end(), std::greater<double>());
  const double floor_ndcg = 0.9 * raw_ndcg;
  auto ensure = [&](double strength, std::int64_t n) -> const EvalReport& {
    const auto key = std::make_pair(strength, n);
    if (cache.find(key) == cache.end()) cache.emplace(key, eval_at(strength, n));
    return cache.at(key);
  };
  double chosen = grid.back();
  bool found = false;
  for (double strength : grid) {
    bool ok = true;
    for (std::int64_t n : n_grid)
      if (ensure(strength, n).ndcg < floor_ndcg) {
        ok = false;
        break;
      }
    if (ok) {
      chosen = strength;
      found = true;
      break;
    }
  }
  if (!found)
    std::cerr << "tune: no grid value keeps the nDCG drop within 10%; using "
              << fmt_exact(chosen) << '\n';
  for (std::int64_t n : n_grid) ensure(chosen, n);
  return chosen;
}

}  // namespace detail

// Emits the steering-strength comparison table: for each n_select, PopSteer
// at the tuned alpha vs the Gaussian-noise ablation at the tuned xi, both
// tuned to a <= 10% nDCG drop against the raw backbone across the whole grid.
inline void cmd_ablate(const RunConfig& config, int threads = 1) {
  const detail::LoadedPipeline p = detail::load_pipeline(config);
  const std::uint64_t hash = config_fingerprint(config);
  const int k = config.eval.k;

  RecPath raw;
  const EvalReport raw_report = evaluate_pipeline(p.backbone, raw, p.split, p.partition, k, threads);

  std::map<std::pair<double, std::int64_t>, EvalReport> ps_cache;
  auto eval_popsteer = [&](double alpha, std::int64_t n) {
    const SteeringPlan plan = build_steering_plan(p.stats, alpha, n);
    RecPath path;
    path.kind = RecPath::Kind::Steered;
    path.sae = &p.sae;
    path.plan = &plan;
    return evaluate_pipeline(p.backbone, path, p.split, p.partition, k, threads);
  };
  const double alpha = detail::tune_strength(config.ablate.alpha_grid, config.ablate.n_grid,
                                             raw_report.ndcg, eval_popsteer, ps_cache);

  std::map<std::pair<double, std::int64_t>, EvalReport> noise_cache;
  auto eval_noise = [&](double xi, std::int64_t n) {
    RecPath path;
    path.kind = RecPath::Kind::Noise;
    path.sae = &p.sae;
    path.stats = &p.stats;
    path.noise_n = n;
    path.noise_xi = xi;
    path.noise_seed = config.ablate.noise_seed;
    path.noise_select = config.noise_select();
    return evaluate_pipeline(p.backbone, path, p.split, p.partition, k, threads);
  };
  const double xi = detail::tune_strength(config.ablate.xi_grid, config.ablate.n_grid,
                                          raw_report.ndcg, eval_noise, noise_cache);

  std::ofstream out = open_artifact(artifact_path(config, "ablation.csv"), "ablation", hash);
  out << "# raw_ndcg=" << fmt_exact(raw_report.ndcg) << '\n';
  out << "n_select,alpha,xi,popsteer_ndcg,popsteer_lt_coverage,popsteer_gini,"
         "noise_ndcg,noise_lt_coverage,noise_gini\n";
  for (std::int64_t n : config.ablate.n_grid) {
    const EvalReport& ps = ps_cache.at({alpha, n});
    const EvalReport& nz = noise_cache.at({xi, n});
    out << n << ',' << fmt_exact(alpha) << ',' << fmt_exact(xi) << ',' << fmt_exact(ps.ndcg)
        << ',' << fmt_exact(ps.lt_coverage) << ',' << fmt_exact(ps.gini) << ','
        << fmt_exact(nz.ndcg) << ',' << fmt_exact(nz.lt_coverage) << ',' << fmt_exact(nz.gini)
        << '\n';
  }
  if (!out) throw DataError("write failed: ablation.csv");
}

inline void cmd_deactivate(const RunConfig& config, int threads = 1) {
  const detail::LoadedPipeline p = detail::load_pipeline(config);
  const std::uint64_t hash = config_fingerprint(config);

  std::ofstream out =
      open_artifact(artifact_path(config, "deactivation.csv"), "deactivation", hash);
  out << "side,kprime,gini\n";
  for (const DeactivationSide side : {DeactivationSide::Popular, DeactivationSide::Unpopular}) {
    const std::string side_name = side == DeactivationSide::Popular ? "popular" : "unpopular";
    const auto qualifying = qualifying_neurons(p.stats, config.deactivate.threshold, side);
    std::vector<int> grid;
    for (int kprime : config.deactivate.kprime_grid) {
      if (kprime <= static_cast<int>(qualifying.size()))
        grid.push_back(kprime);
      else
        std::cerr << "deactivate: dropping K'=" << kprime << " for side=" << side_name
                  << " (only " << qualifying.size() << " qualifying neurons)\n";
    }
    const auto series =
        deactivation_study(p.sae, p.backbone, p.stats, p.split, p.partition,
                           config.deactivate.threshold, grid, side, config.eval.k, threads);
    for (const auto& [kprime, gini] : series)
      out << side_name << ',' << kprime << ',' << fmt_exact(gini) << '\n';
  }
  if (!out) throw DataError("write failed: deactivation.csv");
}

// Convenience driver used by tests and the `run-all` command.
inline void run_full_pipeline(const RunConfig& config, int threads = 1) {
  cmd_prepare(config);
  cmd_train_backbone(config);
  cmd_train_sae(config);
  cmd_analyze(config, threads);
  cmd_steer_eval(config, threads);
  cmd_sweep(config, threads);
  cmd_ablate(config, threads);
  cmd_deactivate(config, threads);
}

}  // namespace popsteer
