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


#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "latprune/commands.hpp"
#include "latprune/config_file.hpp"
#include "latprune/costmodel.hpp"
#include "latprune/errors.hpp"
#include "latprune/latency.hpp"
#include "latprune/trainer.hpp"
#include "latprune/weight_file.hpp"

namespace py = pybind11;
using namespace latprune;

namespace {

LatencyTable table_named(const std::string& name) {
  if (name == "deit-t") return LatencyTable::deit_tiny();
  if (name == "deit-s") return LatencyTable::deit_small();
  return load_table(name);
}

Tensor to_tensor(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  Tensor t(shape);
  std::memcpy(t.data().data(), a.data(), sizeof(double) * t.size());
  return t;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Latency-aware token pruning for vision transformers";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<RangeError>(m, "RangeError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<InfeasibleError>(m, "InfeasibleError", base.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());

  m.def("block_flops", [](std::uint64_t n, std::uint64_t c, std::uint64_t a, std::uint64_t f) {
    const BlockCost b = block_flops(n, c, a, f);
    py::dict rows;
    for (std::size_t i = 0; i < b.rows.size(); ++i) rows[BlockCost::labels()[i]] = b.rows[i];
    rows["total"] = b.total;
    return rows;
  }, py::arg("tokens"), py::arg("d_ch"), py::arg("d_attn"), py::arg("d_fc"));

  m.def("block_lat", [](const std::string& table, double rate) { return block_lat(table_named(table), rate); },
        py::arg("table"), py::arg("rate"));

  m.def("solve_budget", [](const std::string& table, std::size_t blocks, std::vector<std::size_t> positions,
                           double budget_ms) {
    const PruningPlan p = solve_budget(table_named(table), blocks, positions, budget_ms);
    py::dict d;
    d["phase_rates"] = p.phase_rates;
    d["rates"] = p.rates;
    d["latency_ms"] = p.latency_ms;
    return d;
  }, py::arg("table"), py::arg("blocks"), py::arg("positions"), py::arg("budget_ms"));

  m.def("phase_grouping", [](const std::vector<double>& rates, double tol) {
    std::vector<std::tuple<std::size_t, std::size_t, double>> out;
    for (const PhaseSpan& s : phase_grouping(rates, tol)) out.emplace_back(s.start, s.length, s.rate);
    return out;
  }, py::arg("rates"), py::arg("tol") = kDefaultGroupingTol);

  m.def("serialize_config", [](const std::string& config) { return serialize_config(resolve_config(config)); },
        py::arg("config"));

  m.def("analyze", [](const std::string& config, std::optional<double> rate, bool strategy_compare,
                      std::optional<double> target_gflops) {
    AnalyzeOptions o;
    o.rate = rate;
    o.strategy_compare = strategy_compare;
    o.target_gflops = target_gflops;
    return cmd_analyze(resolve_config(config), o).to_json();
  }, py::arg("config"), py::arg("rate") = py::none(), py::arg("strategy_compare") = false,
        py::arg("target_gflops") = py::none());

  m.def("latency", [](const std::string& config, const std::string& table, std::optional<double> rate) {
    LatencyOptions o;
    o.rate = rate;
    return cmd_latency(resolve_config(config), table_named(table), o).to_json();
  }, py::arg("config"), py::arg("table"), py::arg("rate") = py::none());

  m.def("plan", [](const std::string& config, const std::string& table, double budget_ms,
                   std::vector<std::size_t> positions, bool progressive, std::size_t epochs,
                   std::size_t finetune_epochs, std::uint64_t seed) {
    PlanOptions o;
    o.budget_ms = budget_ms;
    o.positions = std::move(positions);
    o.progressive = progressive;
    o.epochs = epochs;
    o.finetune_epochs = finetune_epochs;
    o.seed = seed;
    py::gil_scoped_release unlocked;
    return cmd_plan(resolve_config(config), table_named(table), o).to_json();
  }, py::arg("config"), py::arg("table"), py::arg("budget_ms"), py::arg("positions") = std::vector<std::size_t>{},
        py::arg("progressive") = false, py::arg("epochs") = 20, py::arg("finetune_epochs") = 5, py::arg("seed") = 0);

  m.def("train", [](const std::string& config, std::size_t epochs, std::size_t samples, std::uint64_t seed,
                    const std::string& weights) {
    TrainCommandOptions o;
    o.epochs = epochs;
    o.samples = samples;
    o.seed = seed;
    o.weights_path = weights;
    py::gil_scoped_release unlocked;
    return cmd_train(resolve_config(config), o).to_json();
  }, py::arg("config"), py::arg("epochs") = 20, py::arg("samples") = 1000, py::arg("seed") = 0,
        py::arg("weights") = "");

  m.def("run", [](const std::string& config, const py::array_t<double, py::array::c_style | py::array::forcecast>& images,
                  const std::string& weights, const std::string& mode, bool keep_all, std::uint64_t seed) {
    const ArchConfig c = resolve_config(config);
    if (mode != "train" && mode != "infer") throw ValidationError("mode must be train or infer, got '" + mode + "'");
    const ParamStore params = weights.empty() ? init_model_params(c, seed) : load_weights(weights, c);
    RunOptions o;
    o.mode = mode == "train" ? Phase::train : Phase::infer;
    o.keep_all = keep_all;
    o.seed = seed;
    return cmd_run(c, params, to_tensor(images), o).to_json();
  }, py::arg("config"), py::arg("images"), py::arg("weights") = "", py::arg("mode") = "infer",
        py::arg("keep_all") = false, py::arg("seed") = 0);
}
