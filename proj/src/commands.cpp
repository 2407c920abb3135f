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

#include "latprune/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "latprune/config_file.hpp"
#include "latprune/costmodel.hpp"
#include "latprune/data.hpp"
#include "latprune/errors.hpp"
#include "latprune/trainer.hpp"
#include "latprune/weight_file.hpp"

namespace latprune {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

RunReport start(const char* command, const ArchConfig& config, std::uint64_t seed) {
  RunReport r;
  r.command = command;
  r.config_digest = digest_hex(config_digest(config));
  r.seed = seed;
  return r;
}

void finish(RunReport& r, Clock::time_point t0) {
  r.wall_time_s = std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

json cost_json(const ModelCost& c) {
  json blocks = json::array();
  for (std::size_t l = 0; l < c.blocks.size(); ++l) {
    json row;
    row["block"] = l;
    row["tokens"] = c.tokens_per_block[l];
    for (std::size_t i = 0; i < 6; ++i) row[BlockCost::labels()[i]] = c.blocks[l].rows[i];
    row["total"] = c.blocks[l].total;
    blocks.push_back(row);
  }
  json j;
  j["blocks"] = blocks;
  j["block_total"] = c.block_total;
  j["selector_total"] = c.selector_total;
  j["package_total"] = c.package_total;
  j["embed_head"] = c.embed_head;
  j["total"] = c.total();
  j["total_with_embed_head"] = c.total_with_embed_head();
  j["dense_total_with_embed_head"] = c.dense_total_with_embed_head();
  j["reduction"] = c.reduction();
  j["selector_share"] = c.selector_share();
  return j;
}

json plan_json(const PruningPlan& p) {
  json j;
  j["positions"] = p.positions;
  j["phase_rates"] = p.phase_rates;
  j["rates"] = p.rates;
  if (std::isfinite(p.latency_ms)) j["latency_ms"] = p.latency_ms;
  if (std::isfinite(p.flops)) j["flops"] = p.flops;
  return j;
}

std::string rates_str(const std::vector<double>& rates) {
  std::string s;
  for (std::size_t i = 0; i < rates.size(); ++i) s += (i ? " " : "") + fmt("%.2f", rates[i]);
  return s;
}

}  // namespace

std::string RunReport::to_json() const {
  json j;
  j["command"] = command;
  j["config_digest"] = config_digest;
  j["seed"] = seed;
  j["wall_time_s"] = wall_time_s;
  j["outputs"] = outputs;
  return j.dump(2);
}

RunReport RunReport::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
    RunReport r;
    r.command = j.at("command").get<std::string>();
    r.config_digest = j.at("config_digest").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.wall_time_s = j.at("wall_time_s").get<double>();
    r.outputs = j.at("outputs");
    return r;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("report: ") + e.what());
  }
}

RunReport cmd_analyze(const ArchConfig& config, const AnalyzeOptions& options) {
  const auto t0 = Clock::now();
  config.validate();
  RunReport r = start("analyze", config, options.seed);
  const ModelCost dense = model_flops(config, dense_plan(config.blocks));
  r.outputs["dense"] = cost_json(dense);
  r.human += "dense: blocks " + fmt("%.4f", dense.block_total / 1e9) + " G, with embedding/head " +
             fmt("%.4f", dense.total_with_embed_head() / 1e9) + " G\n";
  r.human += "  block  tokens  qkv_linear  q_times_kT  attn_times_v  projection  fc1  fc2  total\n";
  for (std::size_t l = 0; l < dense.blocks.size(); ++l) {
    const auto& b = dense.blocks[l];
    char buf[256];
    std::snprintf(buf, sizeof(buf), "  %5zu  %6zu  %llu  %llu  %llu  %llu  %llu  %llu  %llu\n", l,
                  dense.tokens_per_block[l], (unsigned long long)b.rows[0], (unsigned long long)b.rows[1],
                  (unsigned long long)b.rows[2], (unsigned long long)b.rows[3], (unsigned long long)b.rows[4],
                  (unsigned long long)b.rows[5], (unsigned long long)b.total);
    r.human += buf;
  }

  std::optional<PruningPlan> plan;
  if (options.target_gflops) {
    plan = solve_flops_target(config, config.selector_positions, *options.target_gflops * 1e9);
  } else if (options.rate && !options.strategy_compare) {
    plan = make_plan(config.blocks, config.selector_positions,
                     std::vector<double>(config.selector_positions.size(), *options.rate));
  } else if (!config.target_rates.empty()) {
    plan = make_plan(config.blocks, config.selector_positions, config.target_rates);
  }
  if (plan) {
    const ModelCost cost = model_flops(config, *plan);
    plan->flops = static_cast<double>(cost.total_with_embed_head());
    r.outputs["plan"] = plan_json(*plan);
    r.outputs["pruned"] = cost_json(cost);
    r.human += "plan rates [" + rates_str(plan->phase_rates) + "]: " +
               fmt("%.4f", cost.total_with_embed_head() / 1e9) + " G, reduction " +
               fmt("%.2f", 100.0 * cost.reduction()) + "%, selector share " +
               fmt("%.3f", 100.0 * cost.selector_share()) + "%\n";
  }
  if (options.strategy_compare) {
    const double rate = options.rate.value_or(0.5);
    const StrategyComparison s = compare_strategies(config, rate);
    json j;
    j["rate"] = rate;
    j["dense"] = s.dense;
    j["token"] = {{"remaining", s.token_remaining}, {"reduction", s.token_reduction}};
    j["head"] = {{"remaining", s.head_remaining}, {"reduction", s.head_reduction}};
    j["channel"] = {{"remaining", s.channel_remaining}, {"reduction", s.channel_reduction}};
    j["attn_share"] = s.attn_share;
    r.outputs["strategy_compare"] = j;
    r.human += "strategy at rate " + fmt("%.2f", rate) + ": token " + fmt("%.2f", 100 * s.token_reduction) +
               "%, head " + fmt("%.2f", 100 * s.head_reduction) + "%, channel " +
               fmt("%.2f", 100 * s.channel_reduction) + "%\n";
  }
  finish(r, t0);
  return r;
}

RunReport cmd_latency(const ArchConfig& config, const LatencyTable& table, const LatencyOptions& options) {
  const auto t0 = Clock::now();
  config.validate();
  RunReport r = start("latency", config, options.seed);
  json entries = json::array();
  for (const auto& e : table.entries()) entries.push_back({{"rate", e.rate}, {"latency_ms", e.latency_ms}});
  r.outputs["device"] = table.device();
  r.outputs["table"] = entries;
  r.human += "device " + table.device() + "\n";
  const PruningPlan dense = dense_plan(config.blocks);
  r.outputs["dense_latency_ms"] = plan_latency(table, dense);
  r.human += "dense: " + fmt("%.4f", plan_latency(table, dense)) + " ms\n";
  if (options.rate) {
    const double ms = block_lat(table, *options.rate);
    r.outputs["rate"] = *options.rate;
    r.outputs["block_latency_ms"] = ms;
    r.human += "block at rate " + fmt("%.3f", *options.rate) + ": " + fmt("%.6f", ms) + " ms\n";
  }
  if (!config.target_rates.empty()) {
    PruningPlan plan = make_plan(config.blocks, config.selector_positions, config.target_rates);
    try {
      plan.latency_ms = plan_latency(table, plan);
      r.outputs["plan"] = plan_json(plan);
      r.human += "config plan: " + fmt("%.4f", plan.latency_ms) + " ms\n";
    } catch (const RangeError& e) {
      r.outputs["plan_error"] = e.what();
      r.human += std::string("config plan outside table: ") + e.what() + "\n";
    }
  }
  finish(r, t0);
  return r;
}

RunReport cmd_plan(const ArchConfig& config, const LatencyTable& table, const PlanOptions& options) {
  const auto t0 = Clock::now();
  config.validate();
  RunReport r = start("plan", config, options.seed);
  const std::vector<std::size_t> positions =
      options.positions.empty() ? std::vector<std::size_t>{0} : options.positions;
  PruningPlan plan = solve_budget(table, config.blocks, positions, options.budget_ms, options.grid_step);
  plan.flops = static_cast<double>(model_flops(config, plan).total_with_embed_head());
  r.outputs["budget_ms"] = options.budget_ms;
  r.outputs["device"] = table.device();
  r.outputs["plan"] = plan_json(plan);
  r.human += "budget " + fmt("%.4f", options.budget_ms) + " ms: phase rates [" + rates_str(plan.phase_rates) +
             "], latency " + fmt("%.4f", plan.latency_ms) + " ms\n";

  if (options.progressive) {
    BlobSpec spec;
    spec.classes = config.num_classes;
    spec.image_size = config.image_size;
    spec.samples = options.train_samples;
    spec.seed = options.seed;
    if (config.in_channels != 1) throw ConfigError("in_channels: synthetic data is single-channel");
    const Dataset train_set = make_blobs(spec);
    spec.samples = options.validation_samples;
    spec.seed = options.seed + 1;
    const Dataset validation = make_blobs(spec);

    ArchConfig base = config;
    base.selector_positions.clear();
    base.target_rates.clear();
    RecipeOptions ro;
    ro.pretrain_epochs = options.epochs;
    ro.finetune_epochs = 0;
    ro.seed = options.seed;
    ro.verify_gradients = false;
    RecipeResult pre = train_recipe(base, train_set, ro, false);

    TrainOptions ft;
    ft.epochs = options.finetune_epochs;
    ft.seed = options.seed;
    ft.verify_gradients = false;
    ModelScheduleEnv env(base, pre.params, train_set, validation, ft, table.max_rate());
    ScheduleOptions so;
    so.rate_step = options.grid_step;
    so.table = &table;
    so.budget_ms = options.budget_ms;
    const ScheduleState st = progressive_schedule(env, so);
    json sched;
    sched["block_rates"] = st.block_rates;
    json phases = json::array();
    for (const auto& p : st.phases) phases.push_back({{"start", p.start}, {"length", p.length}, {"rate", p.rate}});
    sched["phases"] = phases;
    sched["plan"] = plan_json(st.plan);
    sched["budget_met"] = st.budget_met;
    sched["log"] = schedule_log(st);
    r.outputs["progressive"] = sched;
    r.human += "progressive: block rates [" + rates_str(st.block_rates) + "], " +
               (st.budget_met ? "within budget" : "budget NOT met") + "\n";
    r.human += schedule_log(st);
  }
  finish(r, t0);
  return r;
}

RunReport cmd_train(const ArchConfig& config, const TrainCommandOptions& options, ParamStore* trained) {
  const auto t0 = Clock::now();
  config.validate();
  if (config.in_channels != 1) throw ConfigError("in_channels: synthetic data is single-channel");
  RunReport r = start("train", config, options.seed);
  BlobSpec spec;
  spec.classes = config.num_classes;
  spec.image_size = config.image_size;
  spec.samples = options.samples;
  spec.noise = options.noise;
  spec.seed = options.seed;
  const Dataset train_set = make_blobs(spec);
  spec.samples = options.validation_samples;
  spec.seed = options.seed + 1;
  const Dataset validation = make_blobs(spec);

  RecipeOptions ro;
  ro.pretrain_epochs = options.epochs;
  ro.finetune_epochs = options.epochs;
  ro.seed = options.seed;
  RecipeResult res = train_recipe(config, train_set, ro, true);

  const EvalResult infer = evaluate(config, res.params, validation);
  r.outputs["dataset"] = {{"classes", spec.classes},       {"train_samples", options.samples},
                          {"validation_samples", spec.samples}, {"image_size", spec.image_size},
                          {"noise", spec.noise},           {"seed", options.seed}};
  r.outputs["pretrain_loss"] = res.pretrain.epoch_loss;
  r.outputs["finetune_loss"] = res.finetune.epoch_loss;
  r.outputs["finetune_kept_fraction"] = res.finetune.epoch_kept_fraction;
  if (std::isfinite(res.finetune.gradcheck_error)) r.outputs["gradcheck_error"] = res.finetune.gradcheck_error;
  r.outputs["accuracy_infer"] = infer.accuracy;
  r.outputs["kept_fraction_infer"] = infer.kept_fraction;
  r.human += "validation accuracy (argmax inference): " + fmt("%.2f", infer.accuracy) + "%\n";
  if (!config.selector_positions.empty()) {
    const EvalResult sampled = evaluate_sampled(config, res.params, validation, 32, options.seed);
    r.outputs["accuracy_sampled"] = sampled.accuracy;
    r.outputs["kept_fraction_sampled"] = sampled.kept_fraction;
    r.outputs["target_rates"] = config.target_rates;
    r.human += "validation accuracy (sampled decisions): " + fmt("%.2f", sampled.accuracy) + "%\n";
    r.human += "kept fraction per phase, sampled [" + rates_str(sampled.kept_fraction) + "], argmax [" +
               rates_str(infer.kept_fraction) + "]\n";
  }
  if (!options.weights_path.empty()) {
    save_weights(options.weights_path, config, res.params);
    r.outputs["weights"] = options.weights_path;
  }
  if (trained != nullptr) *trained = std::move(res.params);
  finish(r, t0);
  return r;
}

std::vector<std::string> ascii_mask(const ArchConfig& config, const KeepDecision& decision, std::size_t image) {
  const std::size_t side = config.image_size / config.patch_size, off = config.cls_tokens();
  std::vector<std::string> rows(side, std::string(side, '.'));
  for (std::size_t n = 0; n < side * side; ++n)
    if (decision.kept(image, off + n)) rows[n / side][n % side] = '#';
  return rows;
}

RunReport cmd_run(const ArchConfig& config, const ParamStore& params, const Tensor& images, const RunOptions& options) {
  const auto t0 = Clock::now();
  config.validate();
  if (images.rank() != 4 || images.dim(1) != config.image_size || images.dim(2) != config.image_size ||
      images.dim(3) != config.in_channels) {
    throw DimensionError("input " + shape_str(images.shape()) + " does not match the config image shape");
  }
  RunReport r = start("run", config, options.seed);
  ForwardOptions fo;
  fo.layout = options.mode;
  fo.seed = options.seed;
  if (options.keep_all) fo.decision = DecisionMode::keep_all;
  const ForwardResult out = model_forward(config, params, images, fo);
  const std::size_t B = images.dim(0), side = config.image_size / config.patch_size;
  json per_image = json::array();
  for (std::size_t b = 0; b < B; ++b) {
    json img;
    std::vector<double> logits(config.num_classes);
    std::size_t best = 0;
    for (std::size_t k = 0; k < config.num_classes; ++k) {
      logits[k] = out.logits.at(b, k);
      if (logits[k] > logits[best]) best = k;
    }
    img["logits"] = logits;
    img["prediction"] = best;
    std::vector<double> kept;
    json masks = json::array();
    for (std::size_t s = 0; s < out.decisions.size(); ++s) {
      kept.push_back(out.kept_fraction[s][b]);
      const auto rows = ascii_mask(config, out.decisions[s], b);
      masks.push_back(rows);
      r.human += "image " + std::to_string(b) + " phase " + std::to_string(s) + " kept " +
                 fmt("%.3f", out.kept_fraction[s][b]) + "\n";
      for (const auto& row : rows) r.human += "  " + row + "\n";
      if (!options.mask_prefix.empty()) {
        const std::string path =
            options.mask_prefix + ".phase" + std::to_string(s) + ".img" + std::to_string(b) + ".pgm";
        std::ofstream f(path, std::ios::binary);
        if (!f) throw ValidationError("cannot write " + path);
        f << "P5\n" << side << " " << side << "\n255\n";
        for (const auto& row : rows)
          for (char c : row) f.put(c == '#' ? static_cast<char>(255) : static_cast<char>(0));
      }
    }
    img["kept_fraction"] = kept;
    img["masks"] = masks;
    if (!out.final_lengths.empty()) img["final_tokens"] = out.final_lengths[b];
    per_image.push_back(img);
    r.human += "image " + std::to_string(b) + " prediction " + std::to_string(best) + "\n";
  }
  r.outputs["mode"] = options.mode == Phase::infer ? "infer" : "train";
  r.outputs["images"] = per_image;
  finish(r, t0);
  return r;
}

}  // namespace latprune
