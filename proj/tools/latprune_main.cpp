// Copyright 2026 The latprune Authors. All Rights Reserved.
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

// latprune: cost analysis, latency lookup, budget planning, training and
// inference for latency-aware token pruning.
//
// Exit codes: 0 success, 2 validation error, 3 infeasible budget,
// 4 divergence, 1 anything else.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "latprune/commands.hpp"
#include "latprune/config_file.hpp"
#include "latprune/data.hpp"
#include "latprune/errors.hpp"
#include "latprune/weight_file.hpp"

namespace {

using namespace latprune;

constexpr int kExitValidation = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitDivergence = 4;

struct Flags {
  std::string config = "deit-t";
  std::string weights;
  std::string table;
  std::string device;
  std::string out;
  std::string input;
  std::string mode = "infer";
  std::optional<double> budget_ms;
  std::optional<double> rate;
  std::optional<double> target_gflops;
  std::vector<std::size_t> positions;
  bool strategy_compare = false;
  bool progressive = false;
  bool keep_all = false;
  std::size_t epochs = 20;
  std::size_t finetune_epochs = 5;
  std::size_t samples = 1000;
  std::uint64_t seed = 0;
};

LatencyTable resolve_table(const Flags& f) {
  if (!f.table.empty()) {
    if (f.table == "deit-t") return LatencyTable::deit_tiny();
    if (f.table == "deit-s") return LatencyTable::deit_small();
    return load_table(f.table, f.device);
  }
  if (f.device.empty() || f.device == "deit-t") return LatencyTable::deit_tiny();
  if (f.device == "deit-s") return LatencyTable::deit_small();
  throw ValidationError("--device: no built-in table named '" + f.device + "'; pass --table");
}

void emit(const RunReport& report, const Flags& f) {
  std::cerr << report.human;
  const std::string text = report.to_json();
  std::cout << text << "\n";
  if (!f.out.empty()) {
    std::ofstream out(f.out);
    if (!out) throw ValidationError("cannot write " + f.out);
    out << text << "\n";
  }
}

Tensor run_input(const Flags& f, const ArchConfig& config) {
  if (!f.input.empty()) return read_pgm(f.input);
  BlobSpec spec;
  spec.classes = config.num_classes < 2 ? 2 : config.num_classes;
  spec.image_size = config.image_size;
  spec.samples = f.samples;
  spec.seed = f.seed;
  Tensor images = make_blobs(spec).images;
  if (config.in_channels == 1) return images;
  // Replicate the grayscale plane across channels.
  Tensor multi({images.dim(0), images.dim(1), images.dim(2), config.in_channels});
  for (std::size_t i = 0; i < images.size(); ++i)
    for (std::size_t c = 0; c < config.in_channels; ++c) multi[i * config.in_channels + c] = images[i];
  return multi;
}

int run(int argc, char** argv) {
  CLI::App app{"Latency-aware token pruning for vision transformers"};
  app.require_subcommand(1);
  Flags f;

  auto add_common = [&f](CLI::App* sub) {
    sub->add_option("--config", f.config, "Preset (deit-t, deit-s, toy) or config file")->capture_default_str();
    sub->add_option("--seed", f.seed, "Random seed")->capture_default_str();
    sub->add_option("--out", f.out, "Also write the JSON report here");
  };

  CLI::App* analyze = app.add_subcommand("analyze", "FLOPs breakdown, plan cost and strategy comparison");
  add_common(analyze);
  analyze->add_option("--rate", f.rate, "Uniform phase rate, or the comparison rate");
  analyze->add_flag("--strategy-compare", f.strategy_compare, "Compare token, channel and head pruning");
  analyze->add_option("--target-gflops", f.target_gflops, "Solve phase rates for this total");

  CLI::App* latency = app.add_subcommand("latency", "Latency lookup");
  add_common(latency);
  latency->add_option("--table", f.table, "Latency table CSV (rate,latency_ms) or deit-t/deit-s");
  latency->add_option("--device", f.device, "Device name, or built-in table when --table is absent");
  latency->add_option("--rate", f.rate, "Per-block rate to look up");

  CLI::App* plan = app.add_subcommand("plan", "Solve per-phase rates for a latency budget");
  add_common(plan);
  plan->add_option("--table", f.table, "Latency table CSV or deit-t/deit-s");
  plan->add_option("--device", f.device, "Device name, or built-in table when --table is absent");
  plan->add_option("--budget-ms", f.budget_ms, "Latency budget in milliseconds")->required();
  plan->add_option("--positions", f.positions, "Phase start blocks (default: one phase over all blocks)")
      ->delimiter(',');
  plan->add_flag("--progressive", f.progressive, "Run the progressive schedule on synthetic data");
  plan->add_option("--epochs", f.epochs, "Base training epochs for --progressive")->capture_default_str();
  plan->add_option("--finetune-epochs", f.finetune_epochs, "Finetune epochs per rate step")->capture_default_str();

  CLI::App* train = app.add_subcommand("train", "Train on synthetic blobs and save weights");
  add_common(train);
  train->add_option("--epochs", f.epochs, "Epochs per training stage")->capture_default_str();
  train->add_option("--samples", f.samples, "Training samples")->capture_default_str();
  train->add_option("--weights", f.weights, "Weight file to write");

  CLI::App* runc = app.add_subcommand("run", "Forward pass with keep-mask dump");
  add_common(runc);
  runc->add_option("--weights", f.weights, "Weight file (default: fresh initialization)");
  runc->add_option("--input", f.input, "Portable graymap input (default: synthetic samples)");
  runc->add_option("--samples", f.samples, "Synthetic samples when --input is absent");
  runc->add_option("--mode", f.mode, "train or infer")->check(CLI::IsMember({"train", "infer"}));
  runc->add_flag("--keep-all", f.keep_all, "Clamp every selector open");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  const ArchConfig config = resolve_config(f.config);
  if (app.got_subcommand(analyze)) {
    AnalyzeOptions o;
    o.rate = f.rate;
    o.strategy_compare = f.strategy_compare;
    o.target_gflops = f.target_gflops;
    o.seed = f.seed;
    emit(cmd_analyze(config, o), f);
  } else if (app.got_subcommand(latency)) {
    LatencyOptions o;
    o.rate = f.rate;
    o.seed = f.seed;
    emit(cmd_latency(config, resolve_table(f), o), f);
  } else if (app.got_subcommand(plan)) {
    PlanOptions o;
    o.budget_ms = *f.budget_ms;
    o.positions = f.positions;
    o.progressive = f.progressive;
    o.epochs = f.epochs;
    o.finetune_epochs = f.finetune_epochs;
    o.seed = f.seed;
    const LatencyTable table = resolve_table(f);
    emit(cmd_plan(config, table, o), f);
  } else if (app.got_subcommand(train)) {
    TrainCommandOptions o;
    o.epochs = f.epochs;
    o.samples = f.samples;
    o.seed = f.seed;
    o.weights_path = f.weights;
    emit(cmd_train(config, o), f);
  } else if (app.got_subcommand(runc)) {
    const ParamStore params =
        f.weights.empty() ? init_model_params(config, f.seed) : load_weights(f.weights, config);
    if (f.input.empty() && runc->count("--samples") == 0) f.samples = 1;
    RunOptions o;
    o.mode = f.mode == "train" ? Phase::train : Phase::infer;
    o.keep_all = f.keep_all;
    o.seed = f.seed;
    if (!f.out.empty()) o.mask_prefix = f.out;
    emit(cmd_run(config, params, run_input(f, config), o), f);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    std::cout << "{\"error\": \"infeasible\", \"min_latency_ms\": " << e.min_latency_ms() << "}\n";
    return kExitInfeasible;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const RangeError& e) {
    std::cerr << "range error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const DimensionError& e) {
    std::cerr << "dimension error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
