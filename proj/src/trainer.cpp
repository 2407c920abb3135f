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

#include "latprune/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

#include "latprune/errors.hpp"
#include "latprune/gradcheck.hpp"

namespace latprune {
namespace {

void check_labels(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw DimensionError("logits must be [B,K], got " + shape_str(logits.shape()));
  if (logits.dim(0) != labels.size()) {
    throw DimensionError("logits batch " + std::to_string(logits.dim(0)) + " but " + std::to_string(labels.size()) +
                         " labels");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= logits.dim(1)) {
      throw DimensionError("label " + std::to_string(y) + " outside [0, " + std::to_string(logits.dim(1)) + ")");
    }
  }
}

std::vector<double> log_softmax_row(const Tensor& logits, std::size_t b) {
  const std::size_t K = logits.dim(1);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < K; ++k) mx = std::max(mx, logits.at(b, k));
  double s = 0.0;
  for (std::size_t k = 0; k < K; ++k) s += std::exp(logits.at(b, k) - mx);
  const double lse = mx + std::log(s);
  std::vector<double> out(K);
  for (std::size_t k = 0; k < K; ++k) out[k] = logits.at(b, k) - lse;
  return out;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

bool all_finite(const ParamStore& store) {
  for (const auto& [name, t] : store)
    if (!t.all_finite()) return false;
  return true;
}

std::vector<double> phase_rates(const ArchConfig& config, bool selectors) {
  if (!selectors || config.selector_positions.empty()) return {};
  if (config.target_rates.size() != config.selector_positions.size()) {
    throw ConfigError("target_rates: need one rate per selector position");
  }
  return config.target_rates;
}

Tensor reference_logits(const ArchConfig& config, const ParamStore& params, const Tensor& images) {
  ForwardOptions ref;
  ref.layout = Phase::train;
  ref.selectors = false;
  return model_forward(config, params, images, ref).logits;
}

std::size_t count_correct(const Tensor& logits, const std::vector<int>& labels) {
  std::size_t correct = 0;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < logits.dim(1); ++k)
      if (logits.at(b, k) > logits.at(b, best)) best = k;
    correct += static_cast<int>(best) == labels[b] ? 1 : 0;
  }
  return correct;
}

}  // namespace

double kl_divergence(const Tensor& logits, const Tensor& ref_logits) {
  if (logits.shape() != ref_logits.shape() || logits.rank() != 2) {
    throw DimensionError("kl: shapes " + shape_str(logits.shape()) + " and " + shape_str(ref_logits.shape()));
  }
  double total = 0.0;
  for (std::size_t b = 0; b < logits.dim(0); ++b) {
    const auto lp = log_softmax_row(logits, b), lq = log_softmax_row(ref_logits, b);
    for (std::size_t k = 0; k < lp.size(); ++k) total += std::exp(lp[k]) * (lp[k] - lq[k]);
  }
  return total / static_cast<double>(logits.dim(0));
}

LossComponents total_loss(const Tensor& logits, std::span<const int> labels, const Tensor& ref_logits,
                          const std::vector<KeepDecision>& decisions, const std::vector<double>& rates,
                          const LossWeights& weights) {
  check_labels(logits, labels);
  LossComponents c;
  for (std::size_t b = 0; b < labels.size(); ++b) c.cls -= log_softmax_row(logits, b)[labels[b]];
  c.cls /= static_cast<double>(labels.size());
  c.kl = kl_divergence(logits, ref_logits);
  c.ratio = sparsity_loss(decisions, rates);
  c.total = c.cls + weights.kl * c.kl + weights.distill * c.distill + weights.ratio * c.ratio;
  return c;
}

GraphLoss total_loss_graph(const Var& logits, std::span<const int> labels, const Tensor& ref_logits,
                           const std::vector<Var>& patch_decisions, const std::vector<double>& rates,
                           const LossWeights& weights) {
  check_labels(logits.value(), labels);
  if (ref_logits.shape() != logits.shape()) {
    throw DimensionError("reference logits " + shape_str(ref_logits.shape()) + " vs " + shape_str(logits.shape()));
  }
  if (patch_decisions.size() != rates.size()) {
    throw DimensionError(std::to_string(patch_decisions.size()) + " decisions but " + std::to_string(rates.size()) +
                         " rates");
  }
  Tape& tape = logits.tape();
  const double B = static_cast<double>(labels.size());
  Var logp = ad::log_softmax_last(logits);
  Var cls = ad::nll(logp, labels);

  Var logq = ad::log_softmax_last(tape.constant(ref_logits));
  Var kl = ad::scale(ad::sum_all(ad::mul(ad::softmax_last(logits), ad::sub(logp, logq))), 1.0 / B);

  Var ratio = tape.constant(Tensor::scalar(0.0));
  for (std::size_t i = 0; i < rates.size(); ++i) {
    Var gap = ad::add_scalar(ad::mean_all(patch_decisions[i]), -(1.0 - rates[i]));
    ratio = ad::add(ratio, ad::square(gap));
  }
  Var distill = tape.constant(Tensor::scalar(0.0));
  Var total = ad::add(ad::add(cls, ad::scale(kl, weights.kl)),
                      ad::add(ad::scale(distill, weights.distill), ad::scale(ratio, weights.ratio)));
  GraphLoss out{total, {}};
  out.components.cls = cls.value()[0];
  out.components.kl = kl.value()[0];
  out.components.distill = 0.0;
  out.components.ratio = ratio.value()[0];
  out.components.total = total.value()[0];
  return out;
}

void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state, const AdamConfig& config) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t), c2 = 1.0 - std::pow(config.beta2, t);
  for (auto& [name, p] : params) {
    if (!grads.contains(name)) continue;
    const Tensor& g = grads.get(name);
    if (!state.m.contains(name)) {
      state.m.set(name, Tensor(p.shape()));
      state.v.set(name, Tensor(p.shape()));
    }
    Tensor& m = state.m.get(name);
    Tensor& v = state.v.get(name);
    const double lr = is_selector_param(name) ? config.lr_selector : config.lr_backbone;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      if (lr == 0.0) continue;
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config.eps);
    }
  }
}

StepRecord train_step(const ArchConfig& config, ParamStore& params, AdamState& state, const Dataset& batch,
                      const StepOptions& options) {
  const std::vector<double> rates = phase_rates(config, options.selectors);
  const bool pruned = !rates.empty();
  Tape tape;
  BoundParams bp(tape, params, true);
  ForwardOptions fo;
  fo.layout = Phase::train;
  fo.decision = options.decision.value_or(DecisionMode::sample);
  fo.seed = options.seed;
  fo.selectors = options.selectors;
  GraphForward g = model_forward_graph(bp, config, batch.images, fo);
  const Tensor ref = pruned ? reference_logits(config, params, batch.images) : g.logits.value();
  GraphLoss loss = total_loss_graph(g.logits, batch.labels, ref, g.patch_decisions, rates, options.weights);
  if (!std::isfinite(loss.components.total)) throw DivergenceError("non-finite training loss");
  tape.backward(loss.total);
  ParamStore grads = bp.grads();
  if (!all_finite(grads)) throw DivergenceError("non-finite gradient");
  adam_step(params, grads, state, options.adam);

  StepRecord rec{loss.components, {}};
  for (const auto& frac : g.summary.kept_fraction) {
    rec.kept_fraction.push_back(std::accumulate(frac.begin(), frac.end(), 0.0) / static_cast<double>(frac.size()));
  }
  return rec;
}

LossComponents batch_loss(const ArchConfig& config, const ParamStore& params, const Dataset& batch,
                          const StepOptions& options) {
  const std::vector<double> rates = phase_rates(config, options.selectors);
  Tape tape(false);
  BoundParams bp(tape, params, false);
  ForwardOptions fo;
  fo.layout = Phase::train;
  fo.decision = options.decision.value_or(DecisionMode::sample);
  fo.seed = options.seed;
  fo.selectors = options.selectors;
  GraphForward g = model_forward_graph(bp, config, batch.images, fo);
  const Tensor ref = rates.empty() ? g.logits.value() : reference_logits(config, params, batch.images);
  return total_loss_graph(g.logits, batch.labels, ref, g.patch_decisions, rates, options.weights).components;
}

EvalResult evaluate(const ArchConfig& config, const ParamStore& params, const Dataset& data, bool selectors) {
  constexpr std::size_t kChunk = 256;
  EvalResult r;
  const std::size_t S = selectors ? config.selector_positions.size() : 0;
  r.kept_fraction.assign(S, 0.0);
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < data.size(); begin += kChunk) {
    const Dataset chunk = data.slice(begin, begin + kChunk);
    ForwardOptions fo;
    fo.layout = Phase::infer;
    fo.selectors = selectors;
    const ForwardResult out = model_forward(config, params, chunk.images, fo);
    correct += count_correct(out.logits, chunk.labels);
    for (std::size_t b = 0; b < chunk.size(); ++b)
      for (std::size_t s = 0; s < S; ++s) r.kept_fraction[s] += out.kept_fraction[s][b];
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, data.size()));
  r.accuracy = 100.0 * static_cast<double>(correct) / n;
  for (double& f : r.kept_fraction) f /= n;
  return r;
}

EvalResult evaluate_sampled(const ArchConfig& config, const ParamStore& params, const Dataset& data,
                            std::size_t batch_size, std::uint64_t seed) {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  const std::size_t S = config.selector_positions.size();
  EvalResult r;
  r.kept_fraction.assign(S, 0.0);
  std::size_t batches = 0, correct = 0;
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size, ++batches) {
    const Dataset chunk = data.slice(begin, begin + batch_size);
    ForwardOptions fo;
    fo.layout = Phase::train;
    fo.decision = DecisionMode::sample;
    fo.seed = mix_seed(seed, batches);
    const ForwardResult out = model_forward(config, params, chunk.images, fo);
    correct += count_correct(out.logits, chunk.labels);
    for (std::size_t s = 0; s < S; ++s) {
      r.kept_fraction[s] += std::accumulate(out.kept_fraction[s].begin(), out.kept_fraction[s].end(), 0.0) /
                            static_cast<double>(chunk.size());
    }
  }
  for (double& v : r.kept_fraction) v /= static_cast<double>(std::max<std::size_t>(1, batches));
  r.accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(std::max<std::size_t>(1, data.size()));
  return r;
}

double verify_loss_gradients(const ArchConfig& config, const ParamStore& params, const Dataset& probe,
                             const LossWeights& weights, std::uint64_t seed, std::size_t probes) {
  const std::vector<double> rates = phase_rates(config, true);
  const Tensor ref = reference_logits(config, params, probe.images);
  ParamFn f = [&](const BoundParams& bp) {
    ForwardOptions fo;
    fo.layout = Phase::train;
    fo.decision = DecisionMode::soft;
    fo.seed = seed;
    GraphForward g = model_forward_graph(bp, config, probe.images, fo);
    return total_loss_graph(g.logits, probe.labels, ref, g.patch_decisions, rates, weights).total;
  };
  return grad_check_params(f, params, seed, probes).max_rel_error;
}

TrainReport train(const ArchConfig& config, ParamStore& params, const Dataset& data, const TrainOptions& options) {
  if (options.batch_size == 0) throw ConfigError("batch_size must be positive");
  TrainReport report;
  if (options.verify_gradients && options.epochs > 0 && data.size() > 0) {
    report.gradcheck_error = verify_loss_gradients(config, params, data.slice(0, 2), options.step.weights,
                                                   options.seed, options.gradcheck_probes);
  }
  AdamState state;
  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss = 0.0;
    std::vector<double> kept;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += options.batch_size, ++batches) {
      const std::size_t end = std::min(order.size(), begin + options.batch_size);
      const Dataset batch = data.subset(std::span(order).subspan(begin, end - begin));
      StepOptions so = options.step;
      so.seed = mix_seed(options.seed, report.steps);
      const StepRecord rec = train_step(config, params, state, batch, so);
      ++report.steps;
      loss += rec.loss.total;
      if (kept.empty()) kept.assign(rec.kept_fraction.size(), 0.0);
      for (std::size_t s = 0; s < kept.size(); ++s) kept[s] += rec.kept_fraction[s];
    }
    const double n = static_cast<double>(std::max<std::size_t>(1, batches));
    report.epoch_loss.push_back(loss / n);
    for (double& k : kept) k /= n;
    report.epoch_kept_fraction.push_back(std::move(kept));
  }
  return report;
}

ParamStore with_backbone(const ArchConfig& config, const ParamStore& base, std::uint64_t seed) {
  ParamStore fresh = init_model_params(config, seed);
  for (auto& [name, t] : fresh) {
    if (!is_selector_param(name) && base.contains(name) && base.get(name).shape() == t.shape()) t = base.get(name);
  }
  return fresh;
}

RecipeResult train_recipe(const ArchConfig& config, const Dataset& data, const RecipeOptions& options,
                          bool selectors) {
  RecipeResult r;
  r.params = init_model_params(config, options.seed);
  TrainOptions pre;
  pre.epochs = options.pretrain_epochs;
  pre.batch_size = options.batch_size;
  pre.seed = options.seed;
  pre.step.weights = options.weights;
  pre.step.adam = AdamConfig{options.base_lr, options.base_lr};
  pre.step.selectors = false;
  pre.verify_gradients = false;
  r.pretrain = train(config, r.params, data, pre);

  TrainOptions fine = pre;
  fine.epochs = options.finetune_epochs;
  fine.seed = mix_seed(options.seed, 1);
  fine.step.adam = options.finetune_adam;
  fine.step.selectors = selectors;
  fine.verify_gradients = selectors && options.verify_gradients && !config.selector_positions.empty();
  r.finetune = train(config, r.params, data, fine);
  return r;
}

std::vector<PhaseSpan> phase_grouping(const std::vector<double>& rates, double tol, GroupingRule rule) {
  std::vector<PhaseSpan> phases;
  for (std::size_t i = 0; i < rates.size(); ++i) {
    if (phases.empty()) {
      phases.push_back({i, 1, rates[i]});
      continue;
    }
    const double ref = rule == GroupingRule::phase_head ? phases.back().rate : rates[i - 1];
    if (std::abs(rates[i] - ref) >= tol - 1e-12) {
      phases.push_back({i, 1, rates[i]});
    } else {
      ++phases.back().length;
    }
  }
  return phases;
}

ScheduleState progressive_schedule(ScheduleEnv& env, const ScheduleOptions& options) {
  if (!(options.rate_step > 0.0)) throw ConfigError("rate_step must be positive");
  const std::size_t L = env.blocks();
  ScheduleState st;
  st.block_rates.assign(L, 0.0);
  double cap_all = env.max_rate();
  if (options.table != nullptr) cap_all = std::min(cap_all, options.table->max_rate());

  double reference = env.validate();
  for (std::size_t i = L; i-- > 1;) {
    env.insert_selector(i);
    const double cap = i + 1 < L ? std::min(cap_all, st.block_rates[i + 1]) : cap_all;
    InsertionRecord rec;
    rec.block = i;
    rec.reference_accuracy = reference;
    rec.achieved_accuracy = reference;
    for (std::size_t k = 1;; ++k) {
      const double r = grid_rate(k, options.rate_step);
      if (r > cap + 1e-12) break;
      env.set_rate(i, r);
      env.finetune();
      const double acc = env.validate();
      rec.rates.push_back(r);
      rec.accuracies.push_back(acc);
      if (reference - acc > options.drop_threshold) break;
      rec.achieved_rate = r;
      rec.achieved_accuracy = acc;
    }
    env.set_rate(i, rec.achieved_rate);
    st.block_rates[i] = rec.achieved_rate;
    reference = rec.achieved_accuracy;
    st.history.push_back(std::move(rec));
  }

  if (L > 1) {
    std::vector<double> tail(st.block_rates.begin() + 1, st.block_rates.end());
    st.phases = phase_grouping(tail, options.tol, options.rule);
    for (auto& p : st.phases) ++p.start;
  }

  auto to_plan = [&](const std::vector<PhaseSpan>& phases) {
    std::vector<std::size_t> pos;
    std::vector<double> rates;
    for (const auto& p : phases) {
      if (p.rate <= 0.0) continue;
      pos.push_back(p.start);
      rates.push_back(p.rate);
    }
    PruningPlan plan = make_plan(L, pos, rates);
    if (options.table != nullptr) plan.latency_ms = plan_latency(*options.table, plan);
    return plan;
  };
  st.plan = to_plan(st.phases);

  if (options.table != nullptr && std::isfinite(options.budget_ms)) {
    if (st.plan.latency_ms > options.budget_ms + 1e-9) {
      st.budget_met = false;
    } else {
      for (std::size_t p = 0; p < st.phases.size(); ++p) {
        const double floor = p == 0 ? 0.0 : st.phases[p - 1].rate;
        while (st.phases[p].rate - options.rate_step >= floor - 1e-12) {
          auto trial = st.phases;
          const double index = std::round(trial[p].rate / options.rate_step);
          trial[p].rate = index >= 1.0 ? grid_rate(static_cast<std::size_t>(index) - 1, options.rate_step) : 0.0;
          PruningPlan plan = to_plan(trial);
          if (plan.latency_ms > options.budget_ms + 1e-9) break;
          st.phases = std::move(trial);
          st.plan = std::move(plan);
        }
      }
    }
  }
  return st;
}

std::string schedule_log(const ScheduleState& state) {
  std::string out;
  for (std::size_t i = 0; i < state.history.size(); ++i) {
    const auto& r = state.history[i];
    nlohmann::json j;
    j["insertion"] = i;
    j["block"] = r.block;
    j["reference_accuracy"] = r.reference_accuracy;
    j["rates"] = r.rates;
    j["accuracies"] = r.accuracies;
    j["achieved_rate"] = r.achieved_rate;
    j["achieved_accuracy"] = r.achieved_accuracy;
    out += j.dump() + "\n";
  }
  return out;
}

QuadraticScheduleEnv::QuadraticScheduleEnv(double base, std::vector<double> sensitivity, double max_rate)
    : base_(base), sensitivity_(std::move(sensitivity)), max_rate_(max_rate), rates_(sensitivity_.size(), 0.0) {}

void QuadraticScheduleEnv::insert_selector(std::size_t block) {
  if (block >= sensitivity_.size()) throw ContractError("block out of range");
  insertions_.push_back(block);
}

double QuadraticScheduleEnv::validate() {
  double acc = base_;
  for (std::size_t i = 0; i < rates_.size(); ++i) acc -= sensitivity_[i] * rates_[i] * rates_[i];
  return acc;
}

ModelScheduleEnv::ModelScheduleEnv(ArchConfig base_config, ParamStore base_params, Dataset train, Dataset validation,
                                   TrainOptions finetune, double max_rate)
    : base_(std::move(base_config)),
      train_(std::move(train)),
      validation_(std::move(validation)),
      finetune_(std::move(finetune)),
      max_rate_(max_rate) {
  base_.selector_positions.clear();
  base_.target_rates.clear();
  for (const auto& [name, t] : base_params)
    if (!is_selector_param(name)) backbone_.set(name, t);
}

void ModelScheduleEnv::insert_selector(std::size_t block) {
  if (block == 0 || block >= base_.blocks) throw ContractError("selector block out of range");
  ParamStore tmp;
  std::mt19937_64 rng(mix_seed(finetune_.seed, 1000 + block));
  init_selector_params(tmp, "s", base_.embed_dim, base_.heads, rng);
  ParamStore stripped;
  for (const auto& [name, t] : tmp) stripped.set(name.substr(2), t);
  selectors_[block] = std::move(stripped);
  rates_[block] = 0.0;
}

void ModelScheduleEnv::set_rate(std::size_t block, double rate) {
  if (!rates_.count(block)) throw ContractError("no selector at block " + std::to_string(block));
  rates_[block] = rate;
}

ArchConfig ModelScheduleEnv::config() const {
  ArchConfig c = base_;
  for (const auto& [block, rate] : rates_) {
    c.selector_positions.push_back(block);
    c.target_rates.push_back(rate);
  }
  return c;
}

ParamStore ModelScheduleEnv::params() const {
  ParamStore ps = backbone_;
  std::size_t k = 0;
  for (const auto& [block, store] : selectors_) {
    for (const auto& [name, t] : store) ps.set(selector_prefix(k) + "." + name, t);
    ++k;
  }
  return ps;
}

void ModelScheduleEnv::absorb(const ArchConfig& config, const ParamStore& params) {
  for (const auto& [name, t] : params) {
    if (!is_selector_param(name)) {
      backbone_.set(name, t);
      continue;
    }
    const auto dot = name.find('.');
    const std::size_t k = std::stoul(name.substr(8, dot - 8));
    selectors_.at(config.selector_positions.at(k)).set(name.substr(dot + 1), t);
  }
}

void ModelScheduleEnv::finetune() {
  const ArchConfig cfg = config();
  ParamStore ps = params();
  TrainOptions o = finetune_;
  o.seed = mix_seed(finetune_.seed, round_++);
  o.verify_gradients = false;
  train(cfg, ps, train_, o);
  absorb(cfg, ps);
}

double ModelScheduleEnv::validate() { return evaluate(config(), params(), validation_).accuracy; }

double cka(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) {
    throw DimensionError("cka: expected [n,p] and [n,q], got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t n = a.dim(0);
  if (n < 2) throw ValidationError("cka: need at least 2 samples");
  auto centered = [n](const Tensor& x) {
    Tensor c = x;
    const std::size_t p = x.dim(1);
    for (std::size_t j = 0; j < p; ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += x.at(i, j);
      mean /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) c.at(i, j) -= mean;
    }
    return c;
  };
  // ||X^T Y||_F^2 for centered X, Y.
  auto cross = [n](const Tensor& x, const Tensor& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.dim(1); ++i) {
      for (std::size_t j = 0; j < y.dim(1); ++j) {
        double d = 0.0;
        for (std::size_t r = 0; r < n; ++r) d += x.at(r, i) * y.at(r, j);
        s += d * d;
      }
    }
    return s;
  };
  const Tensor ac = centered(a), bc = centered(b);
  const double saa = std::sqrt(cross(ac, ac)), sbb = std::sqrt(cross(bc, bc));
  if (saa == 0.0 || sbb == 0.0) throw ValidationError("cka: zero-variance input, similarity undefined");
  return cross(ac, bc) / (saa * sbb);
}

std::vector<std::vector<double>> block_similarity(const ArchConfig& config, const ParamStore& params,
                                                  const Tensor& images) {
  const std::vector<Tensor> feats = block_features(config, params, images);
  std::vector<Tensor> flat;
  for (const auto& f : feats) flat.push_back(f.reshaped({f.dim(0), f.size() / f.dim(0)}));
  std::vector<std::vector<double>> sim(flat.size(), std::vector<double>(flat.size(), 1.0));
  for (std::size_t i = 0; i < flat.size(); ++i)
    for (std::size_t j = i + 1; j < flat.size(); ++j) sim[i][j] = sim[j][i] = cka(flat[i], flat[j]);
  return sim;
}

}  // namespace latprune
