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

// Vectorisation of persistence diagrams (persistence images and their
// channel means) and distances between diagrams and between vectors.

#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fedtopo/grid_ph.hpp"

namespace fedtopo::topo {

struct Range {
  double lo = 0.0;
  double hi = 1.0;
};

struct PIConfig {
  std::size_t resolution = 8;  // image is resolution x resolution
  double sigma = 0.05;
  Range birth_range{0.0, 1.0};
  Range persistence_range{0.0, 1.0};
  bool include_essential = false;

  std::size_t size() const { return resolution * resolution; }
  // Throws std::invalid_argument.
  void validate() const;
  // Centre of pixel u along the birth axis / v along the persistence axis.
  double birth_center(std::size_t u) const;
  double persistence_center(std::size_t v) const;
};

// A diagram point in birth-persistence coordinates.
struct BirthPersistence {
  double birth = 0.0;
  double persistence = 0.0;  // +inf for essential points
  bool essential = false;
  int dim = 0;
  std::size_t pair_index = 0;  // index into the source diagram's pairs
};

// Points of each homology dimension, [0] = H0, [1] = H1.
std::array<std::vector<BirthPersistence>, 2> to_birth_persistence(const ph::PersistenceDiagram& diagram);
// H0 points followed by H1 points; the pool rasterised into one image.
std::vector<BirthPersistence> pooled_points(const ph::PersistenceDiagram& diagram);

struct PersistenceImage {
  std::vector<double> values;  // row-major over (birth pixel u, persistence pixel v)
  PIConfig config;
};

// Unweighted sum of isotropic Gaussians evaluated at the pixel centres.
// Essential points contribute only with include_essential, at persistence
// clamped to the upper end of persistence_range.
PersistenceImage rasterize_pi(std::span<const BirthPersistence> points, const PIConfig& config);

struct TopoEmbedding {
  std::vector<double> values;
  std::size_t channel_count = 0;
};

// Mean of the per-channel images (H0 and H1 pooled per channel). `channels`
// selects a subset of the diagrams; empty means all of them.
TopoEmbedding topo_embedding(std::span<const ph::PersistenceDiagram> diagrams, const PIConfig& config,
                             std::span<const std::size_t> channels = {});

struct PointGradient {
  double d_birth = 0.0;
  double d_persistence = 0.0;
};

std::vector<PointGradient> pi_backward(std::span<const BirthPersistence> points, const PIConfig& config,
                                       std::span<const double> grad_image);

// Chain rule from (b, p = d - b) to (b, d) for the pairs the points came from.
std::vector<ph::PairGradient> to_pair_gradients(const ph::PersistenceDiagram& diagram,
                                                std::span<const BirthPersistence> points,
                                                std::span<const PointGradient> grads);

// Min-max rescaling to [0, 1]. A constant field maps to all zeros with
// range 0. argmin/argmax are the smallest flat indices attaining the extremes.
struct NormalizedField {
  ph::ScalarField field;
  std::size_t argmin = 0;
  std::size_t argmax = 0;
  double range = 0.0;
};
NormalizedField minmax_normalize(const ph::ScalarField& field);
// Pulls a gradient w.r.t. the normalised field back to the raw field.
std::vector<double> minmax_backward(const NormalizedField& normalized, std::span<const double> grad);

// Distances between diagrams. Points are matched within one homology
// dimension only; essential points only to essential points, costing the
// birth difference. Differing essential counts give +inf.
//
// Bottleneck: L-infinity ground distance, exact via binary search over the
// candidate costs with a perfect-matching feasibility check. Across
// dimensions the largest per-dimension value.
double bottleneck_distance(const ph::PersistenceDiagram& a, const ph::PersistenceDiagram& b);
double bottleneck_distance(const ph::PersistenceDiagram& a, const ph::PersistenceDiagram& b, int dim);

// p-Wasserstein with Euclidean ground distance, exact through an assignment
// on the diagonal-augmented cost matrix. Across dimensions the p-th powers add.
double wasserstein_distance(const ph::PersistenceDiagram& a, const ph::PersistenceDiagram& b, double p);
double wasserstein_distance(const ph::PersistenceDiagram& a, const ph::PersistenceDiagram& b, double p, int dim);

enum class VectorMetric { euclidean, cosine };

// Cosine distance is 1 - cos. Two zero vectors are at distance 0, a zero and
// a nonzero vector at distance 1.
double vector_distance(std::span<const double> a, std::span<const double> b, VectorMetric kind);

// CSV rows `id,v0,...,v{M-1}` preceded by a header.
void write_vectors_csv(std::ostream& out, std::span<const std::string> ids,
                       std::span<const std::vector<double>> vectors);

}  // namespace fedtopo::topo
