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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>

#include "latprune/commands.hpp"
#include "latprune/config_file.hpp"
#include "latprune/costmodel.hpp"
#include "latprune/data.hpp"
#include "latprune/errors.hpp"
#include "latprune/weight_file.hpp"

using namespace latprune;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("latprune_cli_test_" + name)).string();
}

Tensor toy_images(std::size_t n, std::uint64_t seed) {
  BlobSpec s;
  s.samples = n;
  s.seed = seed;
  return make_blobs(s).images;
}

}  // namespace

TEST_CASE("config text round trip") {
  for (const char* name : {"deit-t", "deit-s", "toy"}) {
    const ArchConfig c = preset_config(name);
    CHECK(parse_config(serialize_config(c)) == c);
  }
  ArchConfig odd = ArchConfig::toy();
  odd.use_cls_token = false;
  odd.package_policy = PackagePolicy::merge_single;
  odd.gumbel_tau = 0.3;
  CHECK(parse_config(serialize_config(odd)) == odd);
  CHECK(config_digest(odd) != config_digest(ArchConfig::toy()));
  CHECK(digest_hex(config_digest(odd)).size() == 16);
}

TEST_CASE("presets") {
  const ArchConfig t = preset_config("deit-t");
  CHECK(t.blocks == 12);
  CHECK(t.embed_dim == 192);
  CHECK(t.heads == 3);
  CHECK(t.tokens() == 197);
  CHECK(t.selector_positions == std::vector<std::size_t>{3, 6, 9});
  CHECK(preset_config("deit-s").embed_dim == 384);
  CHECK_THROWS_AS(preset_config("vit-h"), ConfigError);
}

TEST_CASE("config errors name the key") {
  auto message = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("preset = deit-t\nembed_dim = 10\nattn_dim = 12\nfc_dim = 10\n").find("heads") != std::string::npos);
  CHECK(message("preset = toy\nbogus = 3\n").find("bogus") != std::string::npos);
  CHECK(message("preset = toy\nblocks = three\n").find("blocks") != std::string::npos);
  CHECK(message("preset = toy\ngumbel_tau = -1\n").find("gumbel_tau") != std::string::npos);
  CHECK(message("preset = toy\nno equals sign\n").find("line 2") != std::string::npos);
  const ArchConfig c = parse_config("# comment\npreset = toy\nselector_positions = 1, 2\ntarget_rates = 0.2,0.4\n");
  CHECK(c.selector_positions == std::vector<std::size_t>{1, 2});
  CHECK(c.target_rates == std::vector<double>{0.2, 0.4});
}

TEST_CASE("weight file round trip and mismatch") {
  const ArchConfig c = ArchConfig::toy();
  const ParamStore p = init_model_params(c, 3);
  const std::string bytes = encode_weights(c, p);
  CHECK(bytes.substr(0, 4) == "LPRW");
  CHECK(decode_weights(bytes, c) == p);
  CHECK(encode_weights(c, decode_weights(bytes, c)) == bytes);

  ArchConfig other = c;
  other.gumbel_tau = 0.25;
  CHECK_THROWS_AS(decode_weights(bytes, other), ValidationError);
  CHECK_THROWS_AS(decode_weights(bytes.substr(0, bytes.size() - 3), c), ValidationError);
  CHECK_THROWS_AS(decode_weights(bytes + "x", c), ValidationError);
  CHECK_THROWS_AS(decode_weights("XXXX" + bytes.substr(4), c), ValidationError);

  const std::string path = temp_path("weights.bin");
  save_weights(path, c, p);
  CHECK(load_weights(path, c) == p);
  std::filesystem::remove(path);
}

TEST_CASE("report JSON round trip") {
  RunReport r;
  r.command = "analyze";
  r.config_digest = "00ff";
  r.seed = 17;
  r.wall_time_s = 0.25;
  r.outputs["x"] = {1.5, 2.5};
  const RunReport back = RunReport::from_json(r.to_json());
  CHECK(back.command == r.command);
  CHECK(back.config_digest == r.config_digest);
  CHECK(back.seed == 17);
  CHECK(back.wall_time_s == 0.25);
  CHECK(back.outputs == r.outputs);
}

TEST_CASE("analyze reports costmodel totals unchanged") {
  const ArchConfig t = ArchConfig::deit_tiny();
  const RunReport dense = cmd_analyze(t, AnalyzeOptions{});
  CHECK(dense.outputs["dense"]["total"].get<std::uint64_t>() == model_flops(t, dense_plan(12)).total());
  CHECK(std::abs(dense.outputs["dense"]["total"].get<double>() / 1e9 - 1.22) < 0.005);
  const ModelCost rates = model_flops(t, make_plan(12, t.selector_positions, t.target_rates));
  CHECK(dense.outputs["pruned"]["total"].get<std::uint64_t>() == rates.total());

  AnalyzeOptions target;
  target.target_gflops = 2.64;
  const ArchConfig s = ArchConfig::deit_small();
  const RunReport r = cmd_analyze(s, target);
  const PruningPlan plan = solve_flops_target(s, s.selector_positions, 2.64e9);
  CHECK(r.outputs["pruned"]["total_with_embed_head"].get<std::uint64_t>() ==
        model_flops(s, plan).total_with_embed_head());
  CHECK(std::abs(100.0 * r.outputs["pruned"]["reduction"].get<double>() - 42.61) < 0.1);

  AnalyzeOptions cmp;
  cmp.strategy_compare = true;
  cmp.rate = 0.5;
  const RunReport c = cmd_analyze(s, cmp);
  const StrategyComparison want = compare_strategies(s, 0.5);
  CHECK(c.outputs["strategy_compare"]["token"]["reduction"].get<double>() == want.token_reduction);
  CHECK(c.outputs["strategy_compare"]["head"]["reduction"].get<double>() == want.head_reduction);
  CHECK(cmd_analyze(s, cmp).outputs == c.outputs);
}

TEST_CASE("latency command") {
  LatencyOptions o;
  o.rate = 0.25;
  const RunReport r = cmd_latency(ArchConfig::deit_tiny(), LatencyTable::deit_tiny(), o);
  CHECK(std::abs(r.outputs["block_latency_ms"].get<double>() - 0.548) < 1e-9);
  CHECK(r.outputs["dense_latency_ms"].get<double>() == doctest::Approx(8.268));
  o.rate = 0.6;
  CHECK_THROWS_AS(cmd_latency(ArchConfig::deit_tiny(), LatencyTable::deit_tiny(), o), RangeError);
}

TEST_CASE("plan command") {
  const ArchConfig t = ArchConfig::deit_tiny();
  const LatencyTable table = LatencyTable::deit_tiny();
  PlanOptions o;
  o.budget_ms = 12 * 0.509;
  const RunReport r = cmd_plan(t, table, o);
  CHECK(r.outputs["plan"]["phase_rates"][0].get<double>() == doctest::Approx(0.3));
  for (const auto& v : r.outputs["plan"]["rates"]) CHECK(v.get<double>() == doctest::Approx(0.3));
  o.budget_ms = 9.0;
  for (const auto& v : cmd_plan(t, table, o).outputs["plan"]["rates"]) CHECK(v.get<double>() == 0.0);
  o.budget_ms = 5.0;
  try {
    cmd_plan(t, table, o);
    FAIL("expected infeasible");
  } catch (const InfeasibleError& e) {
    CHECK(e.min_latency_ms() == doctest::Approx(5.088));
  }
}

TEST_CASE("progressive plan on synthetic data") {
  PlanOptions o;
  o.budget_ms = 1e9;
  o.progressive = true;
  o.epochs = 1;
  o.finetune_epochs = 0;
  o.train_samples = 64;
  o.validation_samples = 64;
  o.seed = 2;
  const ArchConfig toy = ArchConfig::toy();
  const LatencyTable table("toy", {{0.0, 1.0}, {0.5, 0.5}});
  const RunReport a = cmd_plan(toy, table, o);
  const auto& sched = a.outputs["progressive"];
  CHECK(sched["block_rates"].size() == toy.blocks);
  CHECK(sched["budget_met"].get<bool>());
  CHECK(cmd_plan(toy, table, o).outputs == a.outputs);
}

TEST_CASE("train command") {
  const ArchConfig c = ArchConfig::toy();
  TrainCommandOptions o;
  o.epochs = 0;
  o.samples = 64;
  o.validation_samples = 200;
  o.seed = 5;
  ParamStore trained;
  const RunReport zero = cmd_train(c, o, &trained);
  CHECK(trained == init_model_params(c, 5));
  CHECK(std::abs(zero.outputs["accuracy_infer"].get<double>() - 50.0) < 20.0);

  o.epochs = 1;
  o.weights_path = temp_path("a.bin");
  const RunReport a = cmd_train(c, o);
  o.weights_path = temp_path("b.bin");
  const RunReport b = cmd_train(c, o);
  CHECK(read_file(temp_path("a.bin")) == read_file(temp_path("b.bin")));
  nlohmann::json oa = a.outputs, ob = b.outputs;
  oa.erase("weights");
  ob.erase("weights");
  CHECK(oa == ob);
  CHECK(a.outputs.contains("kept_fraction_sampled"));
  std::filesystem::remove(temp_path("a.bin"));
  std::filesystem::remove(temp_path("b.bin"));
}

TEST_CASE("run command masks") {
  const ArchConfig c = ArchConfig::toy();
  const Tensor images = toy_images(3, 7);
  ParamStore p = init_model_params(c, 7);

  RunOptions open;
  open.keep_all = true;
  const RunReport a = cmd_run(c, p, images, open);
  for (const auto& img : a.outputs["images"]) {
    CHECK(img["kept_fraction"][0].get<double>() == 1.0);
    for (const auto& row : img["masks"][0]) CHECK(row.get<std::string>() == "####");
  }

  // Weights whose selector always prefers keeping.
  for (std::size_t h = 0; h < c.heads; ++h) {
    const std::string k = "selector0.h" + std::to_string(h) + ".score.";
    p.get(k + "w3") = Tensor::zeros(p.get(k + "w3").shape());
    p.get(k + "b3") = Tensor({2}, std::vector<double>{8.0, -8.0});
  }
  const RunReport clamped = cmd_run(c, p, images, RunOptions{});
  for (const auto& img : clamped.outputs["images"]) CHECK(img["kept_fraction"][0].get<double>() == 1.0);

  const ParamStore q = init_model_params(c, 8);
  const RunReport first = cmd_run(c, q, images, RunOptions{});
  const RunReport second = cmd_run(c, q, images, RunOptions{});
  CHECK(first.outputs == second.outputs);
  CHECK(first.human == second.human);

  ArchConfig three = c;
  three.blocks = 4;
  three.selector_positions = {1, 2, 3};
  three.target_rates = {0.3, 0.5, 0.7};
  RunOptions sampled;
  sampled.mode = Phase::train;
  sampled.seed = 3;
  const RunReport multi = cmd_run(three, init_model_params(three, 9), images, sampled);
  for (const auto& img : multi.outputs["images"]) {
    const auto& f = img["kept_fraction"];
    CHECK(f.size() == 3);
    CHECK(f[1].get<double>() <= f[0].get<double>());
    CHECK(f[2].get<double>() <= f[1].get<double>());
  }
  CHECK_THROWS_AS(cmd_run(c, q, Tensor({1, 4, 4, 1}), RunOptions{}), DimensionError);
}

TEST_CASE("run writes graymap masks") {
  const ArchConfig c = ArchConfig::toy();
  RunOptions o;
  o.keep_all = true;
  o.mask_prefix = temp_path("mask");
  cmd_run(c, init_model_params(c, 1), toy_images(1, 1), o);
  const std::string path = o.mask_prefix + ".phase0.img0.pgm";
  const Tensor img = read_pgm(path);
  CHECK(img.shape() == Shape{1, 4, 4, 1});
  for (double v : img.data()) CHECK(v == 1.0);
  std::filesystem::remove(path);
}
