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

// Non-IID client partitions: quantity skew (q), label skew (l), fixed-k
// label skew (k) and noise-amplitude skew (n).

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fedtopo::part {

enum class Scheme { q_skew, l_skew, fixed_k, n_skew };

std::string to_string(Scheme s);
// Throws std::invalid_argument on an unknown name.
Scheme scheme_from_string(const std::string& name);

struct Partition {
  Scheme scheme = Scheme::q_skew;
  std::uint64_t seed = 0;
  std::size_t total = 0;  // size of the source index set
  double alpha = 0.0;     // alpha_q or alpha_l
  std::size_t k = 0;      // fixed_k only
  double sigma_bar = 0.0; // n_skew only
  // Indices into the source dataset, ascending within each client. For
  // n_skew every client holds every index.
  std::vector<std::vector<std::size_t>> clients;
  std::vector<double> sigma;  // n_skew only, one per client

  std::size_t client_count() const { return clients.size(); }
};

// Contiguous ranges [floor(c_j N), floor(c_{j+1} N)) over Dirichlet
// cumulative shares c; the last client takes everything left.
Partition q_skew(std::size_t total, std::size_t n, double alpha, std::uint64_t seed);

// Per class, the class's indices (in dataset order) are cut into contiguous
// runs with Dirichlet proportions, one independent draw per class.
Partition l_skew(std::span<const int> labels, std::size_t n, double alpha, std::uint64_t seed);

// Client j owns labels perm[(j*k + t) mod K] for t < k, perm a seeded
// permutation of the labels. Each class is cut into equal contiguous shards,
// one per owner. Throws if n*k < K or a class has fewer samples than owners.
Partition fixed_k_skew(std::span<const int> labels, std::size_t n, std::size_t k, std::uint64_t seed);

// sigma_j = j / (n - 1) * sigma_bar for j = 0..n-1, so client 0 is the
// noiseless control.
Partition n_skew(std::size_t total, std::size_t n, double sigma_bar, std::uint64_t seed);

// Client j's view of `inputs` under an n_skew partition: inputs plus
// N(0, sigma_j^2) noise drawn from a stream keyed by (seed, j). Client 0's
// copy is bit-identical to the input.
std::vector<double> noisy_copy(const Partition& p, std::size_t client, std::span<const double> inputs);

// Label counts per class for the given indices.
std::vector<std::size_t> label_histogram(std::span<const int> labels, std::span<const std::size_t> indices,
                                         std::size_t num_classes);

// Throws std::invalid_argument if the clients of a q/l/k partition are not
// an exact cover of [0, total).
void check_exact_cover(const Partition& p);

std::string to_json(const Partition& p);
// Throws std::invalid_argument on malformed input.
Partition from_json(const std::string& text);

// `client,count,h0,...,h{K-1}` rows.
std::string summary_csv(const Partition& p, std::span<const int> labels, std::size_t num_classes);

}  // namespace fedtopo::part
