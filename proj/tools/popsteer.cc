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

#include <iostream>
#include <string>
#include <vector>

#include <boost/program_options.hpp>

#include "popsteer/config.hpp"
#include "popsteer/pipeline.hpp"
#include "popsteer/types.hpp"

namespace {

namespace po = boost::program_options;

constexpr const char* kUsage = R"(usage: popsteer <command> --config <file> [options]

commands:
  prepare         generate or load the dataset, k-core filter, split,
                  partition popularity, synthesize polarized profiles
  train-backbone  train the sequential recommender on the training split
  train-sae       train the top-K sparse autoencoder on user embeddings
  analyze         record neuron activation statistics and Cohen's d
  steer-eval      build a steering plan and evaluate raw/reconstruction/steered
  sweep           evaluate the method grids and emit the frontier CSV
  ablate          tuned steering-vs-noise comparison table per n_select
  deactivate      neuron deactivation study (both sides)
  run-all         all of the above in order

options:
  --config <file>   run configuration (required)
  --out <dir>       override the output directory
  --threads <n>     worker threads for per-user stages (default 1)
  --alpha <x>       override steering.alpha
  --n-select <n>    override steering.n_select
  --sae-k <k>       override sae.k
  --sae-scale <s>   override sae.scale
  --help            this text
)";

int dispatch(const std::string& command, const popsteer::RunConfig& config, int threads) {
  if (command == "prepare") {
    popsteer::cmd_prepare(config);
  } else if (command == "train-backbone") {
    popsteer::cmd_train_backbone(config);
  } else if (command == "train-sae") {
    popsteer::cmd_train_sae(config);
  } else if (command == "analyze") {
    popsteer::cmd_analyze(config, threads);
  } else if (command == "steer-eval") {
    popsteer::cmd_steer_eval(config, threads);
  } else if (command == "sweep") {
    popsteer::cmd_sweep(config, threads);
  } else if (command == "ablate") {
    popsteer::cmd_ablate(config, threads);
  } else if (command == "deactivate") {
    popsteer::cmd_deactivate(config, threads);
  } else if (command == "run-all") {
    popsteer::run_full_pipeline(config, threads);
  } else {
    throw popsteer::UsageError("unknown command '" + command + "'");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    po::options_description desc("options");
    desc.add_options()("help", "")("command", po::value<std::string>(), "")(
        "config", po::value<std::string>(), "")("out", po::value<std::string>(), "")(
        "threads", po::value<int>()->default_value(1), "")("alpha", po::value<double>(), "")(
        "n-select", po::value<std::int64_t>(), "")("sae-k", po::value<int>(), "")(
        "sae-scale", po::value<int>(), "");
    po::positional_options_description positional;
    positional.add("command", 1);

    po::variables_map vm;
    try {
      po::store(po::command_line_parser(argc, argv).options(desc).positional(positional).run(),
                vm);
      po::notify(vm);
    } catch (const po::error& e) {
      throw popsteer::UsageError(e.what());
    }

    if (vm.count("help") || !vm.count("command")) {
      std::cout << kUsage;
      return vm.count("help") ? 0 : 1;
    }
    if (!vm.count("config")) throw popsteer::UsageError("--config is required");

    popsteer::RunConfig config = popsteer::load_config(vm["config"].as<std::string>());
    if (vm.count("out")) config.out_dir = vm["out"].as<std::string>();
    if (vm.count("alpha")) config.steering.alpha = vm["alpha"].as<double>();
    if (vm.count("n-select")) config.steering.n_select = vm["n-select"].as<std::int64_t>();
    if (vm.count("sae-k")) config.sae.k = vm["sae-k"].as<int>();
    if (vm.count("sae-scale")) config.sae.scale = vm["sae-scale"].as<int>();
    popsteer::validate_config(config);

    const int threads = vm["threads"].as<int>();
    if (threads < 1) throw popsteer::UsageError("--threads must be >= 1");

    return dispatch(vm["command"].as<std::string>(), config, threads);
  } catch (const popsteer::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const popsteer::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const popsteer::NumericError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
