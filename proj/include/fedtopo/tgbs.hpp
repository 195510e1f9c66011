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

// Topology-guided block screening: score each candidate block by how well
// diagram distances separate same-class from different-class pairs.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedtopo/data_io.hpp"
#include "fedtopo/models.hpp"
#include "fedtopo/topo_vec.hpp"

namespace fedtopo::tgbs {

// (count, channels, height, width) activations of one block.
struct Activations {
  std::size_t count = 0, channels = 0, height = 0, width = 0;
  std::vector<double> values;

  std::size_t plane() const { return height * width; }
  const double* channel(std::size_t n, std::size_t c) const { return values.data() + (n * channels + c) * plane(); }
};

struct Pca {
  Activations reduced;
  std::vector<double> mean;        // per input channel
  std::vector<double> components;  // kept x channels, row-major, unit rows
  std::vector<double> eigenvalues; // all, descending
  std::vector<double> explained;   // per kept component, share of total variance
};

// Channels are the variables, every (sample, pixel) an observation. Keeps
// min(k, numerical rank) components; each is signed so that its largest
// magnitude loading is positive. Throws if k == 0, k > channels or fewer
// than two samples.
Pca dim_reduce(const Activations& a, std::size_t k);

// Mann-Whitney AUC: probability that a within-class similarity exceeds a
// between-class one, ties counting half. Throws unless both classes occur.
double roc_auc(std::span<const std::pair<double, bool>> scored);

enum class Metric { bottleneck, wasserstein2, pi_euclidean, pi_cosine };
std::string to_string(Metric m);
Metric metric_from_string(const std::string& name);
std::vector<Metric> all_metrics();

struct Block {
  std::string name;
  Activations activations;
};

struct PairSample {
  std::size_t a = 0, b = 0;
  bool within = false;
  double distance = 0.0;
  double similarity() const { return -distance; }
};

struct BlockScore {
  std::string block;
  std::vector<std::pair<Metric, double>> auc;
  double mean_auc = 0.0;
};

struct ScreenConfig {
  std::vector<Metric> metrics = all_metrics();
  std::size_t n_pairs = 200;  // per relation
  std::size_t pca_k = 8;      // clamped to the block's channel count
  topo::PIConfig pi;
  std::uint64_t seed = 0;
};

struct ScreenResult {
  std::string best;
  std::vector<BlockScore> scores;  // screened blocks in input order
  std::vector<std::string> warnings;
};

// Up to n_pairs within-class and n_pairs between-class index pairs, drawn
// uniformly without replacement (all of them when fewer exist).
std::vector<PairSample> sample_pairs(std::span<const int> labels, std::size_t n_pairs, std::uint64_t seed);

// Distance between samples a and b: the mean over reduced channels of the
// per-channel distance. Diagram metrics add their H0 and H1 values.
struct BlockTopology {
  std::size_t channels = 0;
  std::vector<std::vector<ph::PersistenceDiagram>> diagrams;  // [sample][channel]
  std::vector<std::vector<std::vector<double>>> images;       // [sample][channel]
};
BlockTopology block_topology(const Activations& reduced, const topo::PIConfig& pi);
double sample_distance(const BlockTopology& t, std::size_t a, std::size_t b, Metric m);

// Blocks whose activations are smaller than 2x2 are skipped with a warning.
// Ties keep the earlier block. Throws when no block can be screened or the
// labels hold fewer than two classes.
ScreenResult screen_blocks(std::span<const Block> blocks, std::span<const int> labels, const ScreenConfig& config);

// Tapped block activations of `model` on every sample of `ds`.
Activations extract_block(nn::Model<double>& model, const data::Dataset& ds, const std::string& block,
                          std::size_t batch = 64);
// The dataset images themselves as a block. `inverted` negates them so that
// bright structures become low under the sublevel filtration.
Activations input_block(const data::Dataset& ds, bool inverted = false);
// Same pixel permutation applied to every sample and channel; keeps the
// value distribution and destroys spatial structure.
Activations spatially_permuted(const Activations& a, std::uint64_t seed);

// `block,metric,auc` rows then `winner,<block>,<mean_auc>`.
std::string scores_csv(const ScreenResult& r);

}  // namespace fedtopo::tgbs
