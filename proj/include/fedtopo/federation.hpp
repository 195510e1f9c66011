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

// Round loop, local training with the topological alignment loss (TAL),
// weighted aggregation and the adaptive alpha schedule.

#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedtopo/data_io.hpp"
#include "fedtopo/models.hpp"
#include "fedtopo/partitions.hpp"
#include "fedtopo/topo_vec.hpp"

namespace fedtopo::fed {

enum class Method { fedavg, fedprox, fedtopo };
enum class Schedule { warmup, linear_topo, piecewise, smooth_topo };
// Where the TAL expectation runs: the current minibatch, or a fixed set of
// te_samples shard samples drawn once per round.
enum class TeMode { minibatch, sample };

std::string to_string(Method m);
std::string to_string(Schedule s);
std::string to_string(TeMode m);
Method method_from_string(const std::string& s);
Schedule schedule_from_string(const std::string& s);
TeMode te_mode_from_string(const std::string& s);

struct ScheduleConfig {
  Schedule strategy = Schedule::smooth_topo;
  double alpha_max = 0.7;
  double alpha_min_global = 0.1;
  std::size_t e_warm = 5;
  double gamma = 0.05;
  double beta = 1.0;
  std::size_t window = 3;
  double l_min = 0.1, l_max = 0.85;
  double ewma = 0.7;  // weight kept by the running value
  double eps = 1e-8;

  void validate() const;
};

struct FederationConfig {
  Method method = Method::fedtopo;
  std::size_t rounds = 5;
  std::size_t local_epochs = 5;
  std::size_t batch_size = 32;
  double lr = 0.01;
  double momentum = 0.9;
  std::size_t lr_step = 30;
  double lr_gamma = 0.01;
  double prox_mu = 0.01;
  std::string block = "conv1";
  topo::PIConfig pi;
  ScheduleConfig schedule;
  TeMode te_mode = TeMode::minibatch;
  std::size_t te_samples = 64;
  bool te_upload = false;
  bool detach_topology = false;
  std::size_t threads = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

// min(1, (e+1)/e_warm) * exp(-gamma r)
double lambda_factor(std::size_t round, std::size_t epoch, std::size_t e_warm, double gamma);

// Per-client TAL history: the last `window` epoch means and an EWMA.
struct SchedulerState {
  std::deque<double> recent;
  double ewma = 0.0;
  bool has_ewma = false;

  void push(double tal, std::size_t window, double ewma_keep);
  bool empty() const { return recent.empty(); }
};

// Base weight before the lambda factor. An empty history counts as eta = 1.
double alpha_base(const ScheduleConfig& cfg, const SchedulerState& state, double alpha_min);

// alpha_min_global * (1 - H(p) / ln K) for the client's label histogram,
// capped at alpha_max. An empty histogram or K < 2 gives alpha_min_global.
double client_alpha_min(std::span<const std::size_t> histogram, double alpha_min_global, double alpha_max);

// Sample-count weighted mean. Exact when all clients agree and invariant
// under client reordering.
std::vector<double> aggregate(std::span<const std::vector<double>> weights, std::span<const std::size_t> counts);

double overhead_ratio(std::size_t m, std::size_t param_count);

// Shuffled sample order for one client epoch.
std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t round, std::size_t client, std::size_t epoch,
                                     std::size_t count);

struct EpochLog {
  std::size_t round = 0, client = 0, epoch = 0;
  double ce = 0.0, tal = 0.0, alpha = 0.0;
};

struct RoundLog {
  std::size_t round = 0;
  std::vector<EpochLog> epochs;
  double test_acc = 0.0;
  double wall_seconds = 0.0;
  double delta = 0.0;
  // Mean TAL over the round's client epochs; 0 without TAL.
  double mean_tal = 0.0;
  std::vector<std::string> warnings;
};

struct ClientState {
  std::size_t id = 0;
  double alpha_min = 0.0;
  SchedulerState scheduler;
};

struct LocalResult {
  std::vector<double> weights;
  std::vector<EpochLog> epochs;
};

// E epochs of SGD from the weights already in `model`; `global` holds the
// frozen broadcast weights used for the TAL reference and the proximal term.
LocalResult local_train(nn::Model<double>& model, const nn::Model<double>& global, const data::Dataset& shard,
                        const FederationConfig& cfg, std::size_t round, ClientState& client);

// Top-1 accuracy.
double evaluate(nn::Model<double>& model, const data::Dataset& ds, std::size_t batch = 256);

struct FederationResult {
  std::vector<double> initial_weights;
  double initial_acc = 0.0;
  std::vector<double> weights;
  std::vector<RoundLog> rounds;
};

// Initialises a clone of `prototype` from the "init" substream of cfg.seed
// and runs cfg.rounds rounds.
FederationResult run_federation(const FederationConfig& cfg, const nn::Model<double>& prototype,
                                const data::Dataset& train, const data::Dataset& test, const part::Partition& p);

// `round,client,epoch,ce,tal,alpha`
std::string epochs_csv(std::span<const RoundLog> rounds);
// `round,test_acc,delta`
std::string rounds_csv(std::span<const RoundLog> rounds);

}  // namespace fedtopo::fed
