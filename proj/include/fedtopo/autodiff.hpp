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

// Dense tensors and a reverse-mode tape. Instantiated for float and double.

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fedtopo/topo_vec.hpp"

namespace fedtopo::nn {

template <typename T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> data;  // row-major

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, T fill = T(0));
  Tensor(std::vector<std::size_t> s, std::vector<T> values);

  std::size_t size() const { return data.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t rank() const { return shape.size(); }
  void fill(T v);
};

std::size_t shape_size(const std::vector<std::size_t>& shape);
std::string shape_string(const std::vector<std::size_t>& shape);

// A trainable tensor with its accumulated gradient.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

using NodeId = std::size_t;

// Records operations in execution order; node ids are therefore a
// topological order and backward() walks them in reverse once.
template <typename T>
class Graph {
 public:
  NodeId input(Tensor<T> value);
  // Leaf bound to `p`; backward() adds into p.grad. `p` must outlive the graph.
  NodeId parameter(Param<T>& p);

  const Tensor<T>& value(NodeId id) const { return nodes_.at(id).value; }
  const Tensor<T>& grad(NodeId id) const { return nodes_.at(id).grad; }
  std::size_t size() const { return nodes_.size(); }

  // x: (N, C, H, W), w: (O, C, kh, kw), b: (O). Zero padding.
  NodeId conv2d(NodeId x, NodeId w, NodeId b, std::size_t stride = 1, std::size_t pad = 0);
  // Non-overlapping k x k windows; trailing rows/columns that do not fill a
  // window are dropped. Ties go to the first maximum in row-major order.
  NodeId maxpool2d(NodeId x, std::size_t k);
  // x: (N, in), w: (out, in), b: (out).
  NodeId linear(NodeId x, NodeId w, NodeId b);
  NodeId relu(NodeId x);
  NodeId add(NodeId a, NodeId b);
  NodeId scale(NodeId a, T s);
  NodeId flatten(NodeId x);
  // (N, C, H, W) -> (N, C)
  NodeId global_avg_pool(NodeId x);
  NodeId sum(NodeId x);
  // Mean over the batch of -log softmax(logits)[label].
  NodeId softmax_cross_entropy(NodeId logits, std::span<const int> labels);
  // Mean over the batch of ||a_n - ref_n||^2; ref is a constant.
  NodeId squared_distance(NodeId a, const Tensor<T>& ref);
  // Per sample: each selected channel is min-max normalised, its diagram
  // computed, and the persistence images averaged. x: (N, C, H, W) with
  // H, W >= 2; output (N, M). With `detach` no gradient flows back to x.
  NodeId topo_embedding(NodeId x, const topo::PIConfig& config, std::span<const std::size_t> channels = {},
                        bool detach = false);

  // Seeds d(loss)/d(loss) = 1 and propagates. Throws if loss is not scalar.
  void backward(NodeId loss);

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    Param<T>* param = nullptr;
    bool needs_grad = false;
    std::function<void(Graph&, Node&)> back;
  };
  NodeId push(Tensor<T> value, bool needs_grad, std::function<void(Graph&, Node&)> back);
  Tensor<T>& grad_of(NodeId id);
  bool needs(NodeId id) const { return nodes_[id].needs_grad; }

  std::vector<Node> nodes_;
};

// Embedding of a (C, H, W) activation stack without a tape; the same
// arithmetic as Graph::topo_embedding for one sample.
std::vector<double> topo_embedding_of(std::span<const double> chw, std::size_t c, std::size_t h, std::size_t w,
                                      const topo::PIConfig& config, std::span<const std::size_t> channels = {});

extern template struct Tensor<float>;
extern template struct Tensor<double>;
extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace fedtopo::nn
