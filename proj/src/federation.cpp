/*
 * Copyright 2026 The fedtopo Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "fedtopo/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "fedtopo/rng.hpp"
#include "fedtopo/text_io.hpp"

namespace fedtopo::fed {

std::string to_string(Method m) {
  switch (m) {
    case Method::fedavg: return "fedavg";
    case Method::fedprox: return "fedprox";
    case Method::fedtopo: return "fedtopo";
  }
  return "?";
}

std::string to_string(Schedule s) {
  switch (s) {
    case Schedule::warmup: return "warmup";
    case Schedule::linear_topo: return "linear_topo";
    case Schedule::piecewise: return "piecewise";
    case Schedule::smooth_topo: return "smooth_topo";
  }
  return "?";
}

std::string to_string(TeMode m) { return m == TeMode::minibatch ? "minibatch" : "sample"; }

Method method_from_string(const std::string& s) {
  for (Method m : {Method::fedavg, Method::fedprox, Method::fedtopo})
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown method '" + s + "' (fedavg, fedprox, fedtopo)");
}

Schedule schedule_from_string(const std::string& s) {
  for (Schedule m : {Schedule::warmup, Schedule::linear_topo, Schedule::piecewise, Schedule::smooth_topo})
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown schedule '" + s + "' (warmup, linear_topo, piecewise, smooth_topo)");
}

TeMode te_mode_from_string(const std::string& s) {
  if (s == "minibatch") return TeMode::minibatch;
  if (s == "sample") return TeMode::sample;
  throw std::invalid_argument("unknown te_mode '" + s + "' (minibatch, sample)");
}

void ScheduleConfig::validate() const {
  if (!(alpha_max >= 0.0)) throw std::invalid_argument("schedule: alpha_max must be >= 0");
  if (!(alpha_min_global >= 0.0)) throw std::invalid_argument("schedule: alpha_min must be >= 0");
  if (e_warm < 1) throw std::invalid_argument("schedule: e_warm must be >= 1");
  if (!(gamma >= 0.0)) throw std::invalid_argument("schedule: gamma must be >= 0");
  if (!(beta > 0.0 && beta <= 1.0)) throw std::invalid_argument("schedule: beta must be in (0, 1]");
  if (window < 1) throw std::invalid_argument("schedule: window must be >= 1");
  if (!(l_max > l_min)) throw std::invalid_argument("schedule: l_max must exceed l_min");
  if (!(ewma >= 0.0 && ewma < 1.0)) throw std::invalid_argument("schedule: ewma must be in [0, 1)");
  if (!(eps >= 0.0)) throw std::invalid_argument("schedule: eps must be >= 0");
}

void FederationConfig::validate() const {
  if (local_epochs < 1) throw std::invalid_argument("federation: local_epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("federation: batch_size must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("federation: lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("federation: momentum must be in [0, 1)");
  if (!(prox_mu >= 0.0)) throw std::invalid_argument("federation: prox_mu must be >= 0");
  if (te_samples < 1) throw std::invalid_argument("federation: te_samples must be >= 1");
  if (threads < 1) throw std::invalid_argument("federation: threads must be >= 1");
  pi.validate();
  schedule.validate();
}

double lambda_factor(std::size_t round, std::size_t epoch, std::size_t e_warm, double gamma) {
  const double warm = std::min(1.0, static_cast<double>(epoch + 1) / static_cast<double>(e_warm));
  return warm * std::exp(-gamma * static_cast<double>(round));
}

void SchedulerState::push(double tal, std::size_t window, double ewma_keep) {
  recent.push_back(tal);
  while (recent.size() > window) recent.pop_front();
  ewma = has_ewma ? ewma_keep * ewma + (1.0 - ewma_keep) * tal : tal;
  has_ewma = true;
}

double alpha_base(const ScheduleConfig& cfg, const SchedulerState& state, double alpha_min) {
  const double lo = std::min(alpha_min, cfg.alpha_max), hi = cfg.alpha_max;
  if (cfg.strategy == Schedule::warmup) return hi;
  if (state.empty()) return hi;
  double level;
  if (cfg.strategy == Schedule::smooth_topo) {
    level = state.ewma;
  } else {
    level = std::accumulate(state.recent.begin(), state.recent.end(), 0.0) / static_cast<double>(state.recent.size());
  }
  const double t = (level - cfg.l_min) / (cfg.l_max - cfg.l_min + cfg.eps);
  if (cfg.strategy == Schedule::piecewise) {
    if (level <= cfg.l_min) return lo;
    if (level >= cfg.l_max) return hi;
    return std::clamp(lo + t * (hi - lo), lo, hi);
  }
  const double eta = std::pow(std::clamp(t, 0.0, 1.0), cfg.beta);
  return std::clamp(lo + (hi - lo) * eta, lo, hi);
}

double client_alpha_min(std::span<const std::size_t> histogram, double alpha_min_global, double alpha_max) {
  const double cap = std::min(alpha_min_global, alpha_max);
  const double total = static_cast<double>(std::accumulate(histogram.begin(), histogram.end(), std::size_t{0}));
  if (total == 0.0 || histogram.size() < 2) return cap;
  double h = 0.0;
  for (std::size_t c : histogram)
    if (c > 0) {
      const double p = static_cast<double>(c) / total;
      h -= p * std::log(p);
    }
  const double imbalance = std::clamp(1.0 - h / std::log(static_cast<double>(histogram.size())), 0.0, 1.0);
  return std::min(alpha_min_global * imbalance, alpha_max);
}

std::vector<double> aggregate(std::span<const std::vector<double>> weights, std::span<const std::size_t> counts) {
  if (weights.empty()) throw std::invalid_argument("aggregate: no client models");
  if (weights.size() != counts.size()) throw std::invalid_argument("aggregate: weights/counts mismatch");
  const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  if (total == 0) throw std::invalid_argument("aggregate: total sample count is zero");
  const std::size_t dim = weights[0].size();
  for (const auto& w : weights)
    if (w.size() != dim) throw std::invalid_argument("aggregate: parameter size mismatch");
  std::vector<double> share(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i)
    share[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
  // min + sum of sorted weighted offsets: exact on identical inputs and
  // independent of client order.
  std::vector<double> out(dim), terms(weights.size());
  for (std::size_t k = 0; k < dim; ++k) {
    double lo = weights[0][k];
    for (const auto& w : weights) lo = std::min(lo, w[k]);
    for (std::size_t i = 0; i < weights.size(); ++i) terms[i] = share[i] * (weights[i][k] - lo);
    std::sort(terms.begin(), terms.end());
    double acc = 0.0;
    for (double t : terms) acc += t;
    out[k] = lo + acc;
  }
  return out;
}

double overhead_ratio(std::size_t m, std::size_t param_count) {
  if (param_count == 0) throw std::invalid_argument("overhead_ratio: param_count must be >= 1");
  return static_cast<double>(m) / static_cast<double>(param_count);
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t round, std::size_t client, std::size_t epoch,
                                     std::size_t count) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng(seed).substream("batching").substream(round).substream(client).substream(epoch);
  rng.shuffle(order);
  return order;
}

namespace {

nn::Tensor<double> gather(const data::Dataset& ds, std::span<const std::size_t> idx) {
  const std::size_t s = ds.sample_size();
  nn::Tensor<double> x({idx.size(), ds.channels, ds.height, ds.width});
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(ds.images.begin() + static_cast<std::ptrdiff_t>(idx[i] * s), s, x.data.begin() + i * s);
  return x;
}

// Reference embeddings of the frozen broadcast model.
nn::Tensor<double> reference_te(nn::Model<double>& ref, const nn::Tensor<double>& x, const FederationConfig& cfg) {
  nn::Graph<double> g;
  auto r = ref.forward(g, g.input(x), cfg.block);
  return g.value(g.topo_embedding(r.logits, cfg.pi, {}, true));
}

}  // namespace

LocalResult local_train(nn::Model<double>& model, const nn::Model<double>& global, const data::Dataset& shard,
                        const FederationConfig& cfg, std::size_t round, ClientState& client) {
  if (shard.count == 0) throw std::invalid_argument("local_train: empty shard");
  const bool topo = cfg.method == Method::fedtopo;
  const bool prox = cfg.method == Method::fedprox;
  // alpha_max == 0 switches the TAL off entirely, leaving plain FedAvg.
  const bool measure_tal = topo && cfg.schedule.alpha_max > 0.0;
  auto ref = global.clone();
  const std::vector<double> anchor = global.flat();

  std::vector<std::size_t> te_idx;
  nn::Tensor<double> te_x, te_ref;
  if (measure_tal && cfg.te_mode == TeMode::sample) {
    te_idx.resize(shard.count);
    std::iota(te_idx.begin(), te_idx.end(), 0);
    Rng rng = Rng(cfg.seed).substream("te_sample").substream(round).substream(client.id);
    rng.shuffle(te_idx);
    te_idx.resize(std::min(cfg.te_samples, shard.count));
    te_x = gather(shard, te_idx);
    te_ref = reference_te(*ref, te_x, cfg);
  }

  nn::Sgd<double> opt(cfg.momentum);
  LocalResult out;
  for (std::size_t e = 0; e < cfg.local_epochs; ++e) {
    nn::StepLR sched{cfg.lr, cfg.lr_step, cfg.lr_gamma, round * cfg.local_epochs + e};
    const double lr = sched.lr();
    double alpha = 0.0;
    if (topo)
      alpha = lambda_factor(round, e, cfg.schedule.e_warm, cfg.schedule.gamma) *
              alpha_base(cfg.schedule, client.scheduler, client.alpha_min);

    const auto order = epoch_order(cfg.seed, round, client.id, e, shard.count);
    double ce_sum = 0.0, tal_sum = 0.0;
    std::size_t tal_weight = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t m = std::min(cfg.batch_size, order.size() - start);
      std::span<const std::size_t> idx(order.data() + start, m);
      std::vector<int> labels(m);
      for (std::size_t i = 0; i < m; ++i) labels[i] = shard.labels[idx[i]];

      model.zero_grad();
      nn::Graph<double> g;
      auto x = gather(shard, idx);
      auto f = model.forward(g, g.input(x));
      nn::NodeId loss = g.softmax_cross_entropy(f.logits, labels);
      ce_sum += g.value(loss).data[0] * static_cast<double>(m);
      if (measure_tal) {
        // With alpha == 0 the TAL is still measured so the schedule keeps
        // receiving feedback, but it stays off the loss.
        const bool train_tal = alpha > 0.0;
        const bool detach = cfg.detach_topology || !train_tal;
        nn::NodeId tal;
        std::size_t weight = m;
        if (cfg.te_mode == TeMode::minibatch) {
          auto t = g.topo_embedding(f.taps.at(cfg.block), cfg.pi, {}, detach);
          tal = g.squared_distance(t, reference_te(*ref, x, cfg));
        } else {
          auto fs = model.forward(g, g.input(te_x), cfg.block);
          auto t = g.topo_embedding(fs.logits, cfg.pi, {}, detach);
          tal = g.squared_distance(t, te_ref);
          weight = 1;
        }
        tal_sum += g.value(tal).data[0] * static_cast<double>(weight);
        tal_weight += weight;
        if (train_tal) loss = g.add(loss, g.scale(tal, alpha));
      }
      g.backward(loss);
      if (prox) {
        // d/dw of (mu/2)||w - w_bar||^2
        std::size_t k = 0;
        for (auto& p : model.params())
          for (std::size_t i = 0; i < p.grad.size(); ++i, ++k) p.grad.data[i] += cfg.prox_mu * (p.value.data[i] - anchor[k]);
      }
      opt.step(model.params(), lr);
    }
    EpochLog log{round, client.id, e, ce_sum / static_cast<double>(shard.count), 0.0, alpha};
    if (tal_weight > 0) {
      log.tal = tal_sum / static_cast<double>(tal_weight);
      client.scheduler.push(log.tal, cfg.schedule.window, cfg.schedule.ewma);
    }
    out.epochs.push_back(log);
  }
  out.weights = model.flat();
  return out;
}

double evaluate(nn::Model<double>& model, const data::Dataset& ds, std::size_t batch) {
  if (ds.count == 0) throw std::invalid_argument("evaluate: empty dataset");
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < ds.count; start += batch) {
    const std::size_t m = std::min(batch, ds.count - start);
    idx.resize(m);
    std::iota(idx.begin(), idx.end(), start);
    nn::Graph<double> g;
    const auto& logits = g.value(model.forward(g, g.input(gather(ds, idx))).logits);
    const std::size_t k = logits.dim(1);
    for (std::size_t i = 0; i < m; ++i) {
      const auto row = logits.data.begin() + static_cast<std::ptrdiff_t>(i * k);
      const auto best = static_cast<std::size_t>(std::max_element(row, row + static_cast<std::ptrdiff_t>(k)) - row);
      correct += static_cast<int>(best) == ds.labels[start + i];
    }
  }
  return static_cast<double>(correct) / static_cast<double>(ds.count);
}

FederationResult run_federation(const FederationConfig& cfg, const nn::Model<double>& prototype,
                                const data::Dataset& train, const data::Dataset& test, const part::Partition& p) {
  cfg.validate();
  if (p.total != train.count)
    throw std::invalid_argument("run_federation: partition covers " + std::to_string(p.total) + " samples, dataset has " +
                                std::to_string(train.count));
  if (p.clients.empty()) throw std::invalid_argument("run_federation: partition has no clients");
  const auto blocks = prototype.blocks();
  if (cfg.method == Method::fedtopo && std::find(blocks.begin(), blocks.end(), cfg.block) == blocks.end())
    throw std::invalid_argument("run_federation: model " + prototype.arch() + " has no block '" + cfg.block + "'");

  auto global = prototype.clone();
  Rng init = Rng(cfg.seed).substream("init");
  global->init(init);

  FederationResult result;
  result.initial_weights = global->flat();
  result.initial_acc = evaluate(*global, test);

  const std::size_t n = p.clients.size();
  std::vector<ClientState> clients(n);
  std::vector<data::Dataset> shards(n);
  for (std::size_t j = 0; j < n; ++j) {
    clients[j].id = j;
    const auto hist = part::label_histogram(train.labels, p.clients[j], train.num_classes);
    clients[j].alpha_min = client_alpha_min(hist, cfg.schedule.alpha_min_global, cfg.schedule.alpha_max);
    shards[j] = data::subset(train, p.clients[j]);
    if (p.scheme == part::Scheme::n_skew) shards[j].images = part::noisy_copy(p, j, shards[j].images);
  }

  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    RoundLog log;
    log.round = r;
    std::vector<std::optional<LocalResult>> local(n);
    auto train_client = [&](std::size_t j) {
      auto model = global->clone();
      local[j] = local_train(*model, *global, shards[j], cfg, r, clients[j]);
    };
    std::vector<std::size_t> active;
    for (std::size_t j = 0; j < n; ++j) {
      if (shards[j].count == 0) {
        log.warnings.push_back("round " + std::to_string(r) + ": client " + std::to_string(j) + " has no samples, skipped");
      } else {
        active.push_back(j);
      }
    }
    if (active.empty()) throw std::invalid_argument("run_federation: every client shard is empty");
    if (cfg.threads <= 1) {
      for (std::size_t j : active) train_client(j);
    } else {
      for (std::size_t start = 0; start < active.size(); start += cfg.threads) {
        std::vector<std::future<void>> jobs;
        for (std::size_t t = start; t < std::min(active.size(), start + cfg.threads); ++t)
          jobs.push_back(std::async(std::launch::async, train_client, active[t]));
        for (auto& job : jobs) job.get();
      }
    }

    std::vector<std::vector<double>> weights;
    std::vector<std::size_t> counts;
    double tal_sum = 0.0;
    std::size_t tal_count = 0;
    for (std::size_t j : active) {
      weights.push_back(std::move(local[j]->weights));
      counts.push_back(shards[j].count);
      for (const auto& e : local[j]->epochs) {
        log.epochs.push_back(e);
        if (cfg.method == Method::fedtopo && cfg.schedule.alpha_max > 0.0) {
          tal_sum += e.tal;
          ++tal_count;
        }
      }
    }
    global->set_flat(aggregate(weights, counts));
    log.test_acc = evaluate(*global, test);
    log.mean_tal = tal_count ? tal_sum / static_cast<double>(tal_count) : 0.0;
    if (cfg.te_upload && cfg.method == Method::fedtopo) log.delta = overhead_ratio(cfg.pi.size(), global->parameter_count());
    log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.rounds.push_back(std::move(log));
  }
  result.weights = global->flat();
  return result;
}

std::string epochs_csv(std::span<const RoundLog> rounds) {
  std::ostringstream out;
  out << "round,client,epoch,ce,tal,alpha\n";
  for (const auto& r : rounds)
    for (const auto& e : r.epochs)
      out << e.round << ',' << e.client << ',' << e.epoch << ',' << format_double(e.ce) << ',' << format_double(e.tal)
          << ',' << format_double(e.alpha) << '\n';
  return out.str();
}

std::string rounds_csv(std::span<const RoundLog> rounds) {
  std::ostringstream out;
  out << "round,test_acc,delta\n";
  for (const auto& r : rounds) out << r.round << ',' << format_double(r.test_acc) << ',' << format_double(r.delta) << '\n';
  return out.str();
}

}  // namespace fedtopo::fed
