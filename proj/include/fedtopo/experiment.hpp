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

// Experiment configuration and the commands behind the `fedtopo` tool.

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedtopo/data_io.hpp"
#include "fedtopo/federation.hpp"
#include "fedtopo/grid_ph.hpp"
#include "fedtopo/partitions.hpp"
#include "fedtopo/tgbs.hpp"

namespace fedtopo::cli {

// Invalid or unreadable configuration; the tool exits with status 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetConfig {
  std::string kind = "synthetic";  // synthetic, idx or cifar10
  std::string train_images, train_labels, test_images, test_labels;  // idx
  std::vector<std::string> train_batches, test_batches;             // cifar10
  data::SyntheticSpec synthetic;  // its seed is derived from the experiment seed
  std::size_t synthetic_test_per_class = 50;
  // Class-stratified prefixes; 0 keeps the whole split.
  std::size_t train_subsample = 0, test_subsample = 0;
};

struct PartitionConfig {
  part::Scheme scheme = part::Scheme::l_skew;
  std::size_t clients = 5;
  double alpha = 0.5;      // q_skew, l_skew
  std::size_t k = 2;       // fixed_k
  double sigma_bar = 0.1;  // n_skew
};

struct ScreenSettings {
  // Model blocks, or "input" for the intensity-inverted images themselves.
  std::vector<std::string> blocks{"conv1", "conv2"};
  std::vector<tgbs::Metric> metrics = tgbs::all_metrics();
  std::size_t n_pairs = 200;
  std::size_t pca_k = 8;
  std::size_t samples = 200;  // stratified prefix of the training split
  std::string checkpoint;     // optional weights; otherwise the seeded init
};

struct ExperimentConfig {
  int version = 1;
  std::uint64_t seed = 0;
  std::string out;  // output directory; --out takes precedence
  DatasetConfig dataset;
  std::string arch = "simple_cnn";
  PartitionConfig partition;
  topo::PIConfig pi;
  fed::FederationConfig federation;  // pi and seed are taken from above
  ScreenSettings screen;
};

// Unknown keys, wrong types and out-of-range values raise ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& c);
// Relative dataset and checkpoint paths are taken relative to the file.
ExperimentConfig load_config(const std::filesystem::path& path);
// Semantic checks, including that referenced files exist.
void validate(const ExperimentConfig& c);
// The federation settings with the shared pi and seed filled in.
fed::FederationConfig federation_config(const ExperimentConfig& c);

// Derived seeds of the named random streams.
std::uint64_t stream_seed(std::uint64_t seed, const std::string& name);

struct Splits {
  data::Dataset train, test;
};
Splits load_datasets(const ExperimentConfig& c);
part::Partition make_partition(const ExperimentConfig& c, const data::Dataset& train);
std::unique_ptr<nn::Model<double>> make_model(const ExperimentConfig& c, const data::Dataset& train);

// Rows of comma or whitespace separated numbers, or a PGM (P2/P5) image.
// Parse errors name the line.
ph::ScalarField read_field(const std::filesystem::path& path);

// The commands write into `out` and return what they print on stdout.
std::string cmd_ph(const std::filesystem::path& input, const std::optional<std::filesystem::path>& out);
std::string cmd_screen(const ExperimentConfig& c, const std::filesystem::path& out);
std::string cmd_partition(const ExperimentConfig& c, const std::filesystem::path& out);
std::string cmd_train(const ExperimentConfig& c, const std::filesystem::path& out);
// Tabulates the report.json of each run directory into summary.csv.
std::string cmd_report(const std::vector<std::filesystem::path>& runs, const std::filesystem::path& out);

// Deterministic report: no timings, no configuration echo.
nlohmann::json train_report(const fed::FederationResult& r);

}  // namespace fedtopo::cli
