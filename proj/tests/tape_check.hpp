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

// Gradient checks of single tape operations: analytic gradients of a loss
// built from the operation against central differences.

#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fedtopo/autodiff.hpp"
#include "gradcheck.hpp"

namespace tapecheck {

using fedtopo::nn::Graph;
using fedtopo::nn::NodeId;
using fedtopo::nn::Param;
using fedtopo::nn::Tensor;

inline Tensor<double> random_tensor(std::vector<std::size_t> shape, std::mt19937& gen, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data) v = u(gen);
  return t;
}

inline Param<double> make_param(std::string name, Tensor<double> v) {
  Param<double> p{std::move(name), v, Tensor<double>(v.shape)};
  return p;
}

// Loss ||op(inputs) - ref||^2 / N; returns d loss / d every input coordinate,
// analytic and by central differences.
struct Check {
  std::vector<double> analytic, numeric;
};

inline Check check_op(std::vector<Tensor<double>> inputs,
               const std::function<NodeId(Graph<double>&, const std::vector<NodeId>&)>& op, std::mt19937& gen) {
  std::vector<Param<double>> ps;
  for (std::size_t i = 0; i < inputs.size(); ++i) ps.push_back(make_param("p" + std::to_string(i), inputs[i]));
  Tensor<double> ref;
  auto run = [&](bool grad) {
    Graph<double> g;
    std::vector<NodeId> ids;
    for (auto& p : ps) ids.push_back(g.parameter(p));
    NodeId out = op(g, ids);
    if (ref.data.empty()) {
      ref = random_tensor(g.value(out).shape, gen);
      if (ref.rank() == 1 && ref.size() == 1) ref.shape = g.value(out).shape;
    }
    Tensor<double> o = g.value(out);
    if (o.rank() < 2 && o.size() == 1) return o.data[0] + (grad ? (g.backward(out), 0.0) : 0.0);
    NodeId loss = g.squared_distance(out, ref);
    if (grad) g.backward(loss);
    return g.value(loss).data[0];
  };
  run(true);
  Check c;
  for (auto& p : ps) c.analytic.insert(c.analytic.end(), p.grad.data.begin(), p.grad.data.end());
  std::vector<double> x0;
  for (auto& p : ps) x0.insert(x0.end(), p.value.data.begin(), p.value.data.end());
  auto f = [&](const std::vector<double>& x) {
    std::size_t off = 0;
    for (auto& p : ps) {
      std::copy(x.begin() + off, x.begin() + off + p.value.size(), p.value.data.begin());
      off += p.value.size();
    }
    return run(false);
  };
  c.numeric = gradcheck::central_differences(f, x0);
  f(x0);
  return c;
}

}  // namespace tapecheck
