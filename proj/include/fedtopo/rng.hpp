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

#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace fedtopo {

// Counter-based generator: the n-th draw of a stream is mix(key, n), so a
// stream is fully determined by (seed, stream path) on every platform. The
// distributions below are written out instead of using <random> because the
// standard leaves distribution algorithms implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Independent child stream. Children with distinct names (or ids) never
  // share draws with each other or with the parent.
  Rng substream(std::string_view name) const;
  Rng substream(std::uint64_t id) const;

  std::uint64_t next_u64();

  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer on [0, n); n must be positive.
  std::size_t below(std::size_t n);
  double normal();
  // Natural log of a Gamma(shape, 1) draw. Kept in log space so that tiny
  // shapes (Dirichlet with alpha << 1) do not underflow to zero.
  double log_gamma_draw(double shape);
  double gamma(double shape);
  // Point on the simplex; Dir(alpha, ..., alpha) of dimension n.
  std::vector<double> dirichlet(double alpha, std::size_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  std::uint64_t key() const { return key_; }

 private:
  Rng(std::uint64_t key, int /*tag*/) : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace fedtopo
