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

// Networks, SGD with momentum, StepLR and the FTCK checkpoint format.

#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "fedtopo/autodiff.hpp"
#include "fedtopo/rng.hpp"

namespace fedtopo::nn {

template <typename T>
struct ForwardResult {
  NodeId logits = 0;  // the tap itself when forward stopped early
  std::map<std::string, NodeId> taps;
};

template <typename T>
class Model {
 public:
  virtual ~Model() = default;
  virtual std::string arch() const = 0;
  virtual std::vector<std::size_t> input_shape() const = 0;  // C, H, W
  virtual std::vector<std::string> blocks() const = 0;
  virtual std::unique_ptr<Model> clone() const = 0;

  // Records the network on `g` for a batch x of shape (N, C, H, W). With
  // `stop_after` set, recording ends at that block's tap.
  virtual ForwardResult<T> forward(Graph<T>& g, NodeId x, std::string_view stop_after = {}) = 0;

  std::vector<Param<T>>& params() { return params_; }
  const std::vector<Param<T>>& params() const { return params_; }
  std::size_t parameter_count() const;
  void zero_grad();
  std::vector<T> flat() const;
  void set_flat(std::span<const T> values);
  // Kaiming-uniform (bound sqrt(6 / fan_in)) weights, zero biases.
  void init(Rng& rng);

 protected:
  Param<T>& add_param(std::string name, std::vector<std::size_t> shape);
  NodeId bind(Graph<T>& g, std::size_t index) { return g.parameter(params_[index]); }
  void check_input(const Graph<T>& g, NodeId x) const;

  std::vector<Param<T>> params_;
};

// conv 5x5 -> 6, maxpool 2, conv 5x5 -> 16, maxpool 2, fc 256 -> 120 -> 84 ->
// classes, ReLU after each conv and hidden fc. Input 1 x 28 x 28. Blocks
// "conv1" and "conv2" tap the convolution outputs before the ReLU.
template <typename T>
class SimpleCnn final : public Model<T> {
 public:
  explicit SimpleCnn(std::size_t classes = 10);
  std::string arch() const override { return "simple_cnn"; }
  std::vector<std::size_t> input_shape() const override { return {1, 28, 28}; }
  std::vector<std::string> blocks() const override { return {"conv1", "conv2"}; }
  std::unique_ptr<Model<T>> clone() const override { return std::make_unique<SimpleCnn>(*this); }
  ForwardResult<T> forward(Graph<T>& g, NodeId x, std::string_view stop_after = {}) override;
};

// 3x3 stem (16) and three basic residual blocks (16, 32/2, 64/2; strided
// blocks use a 1x1 projection shortcut), global average pool, fc. Blocks
// "conv1" (stem, before ReLU) and "stage1".."stage3" (block outputs).
template <typename T>
class MiniResnet final : public Model<T> {
 public:
  MiniResnet(std::size_t in_channels = 3, std::size_t size = 32, std::size_t classes = 10);
  std::string arch() const override { return "mini_resnet"; }
  std::vector<std::size_t> input_shape() const override { return {in_, size_, size_}; }
  std::vector<std::string> blocks() const override { return {"conv1", "stage1", "stage2", "stage3"}; }
  std::unique_ptr<Model<T>> clone() const override { return std::make_unique<MiniResnet>(*this); }
  ForwardResult<T> forward(Graph<T>& g, NodeId x, std::string_view stop_after = {}) override;

 private:
  std::size_t in_, size_;
};

// Throws std::invalid_argument for an unknown architecture.
template <typename T>
std::unique_ptr<Model<T>> make_model(const std::string& arch, const std::vector<std::size_t>& input_shape,
                                     std::size_t classes);

struct StepLR {
  double lr0 = 0.01;
  std::size_t step_size = 30;
  double gamma = 0.01;
  std::size_t epoch = 0;

  double lr() const;
  // Advances one epoch.
  void step() { ++epoch; }
};

// Classical momentum: v <- mu v + g, w <- w - lr v.
template <typename T>
class Sgd {
 public:
  explicit Sgd(double momentum = 0.9) : momentum_(momentum) {}
  void step(std::vector<Param<T>>& params, double lr);
  void reset() { velocity_.clear(); }
  const std::vector<std::vector<T>>& velocity() const { return velocity_; }

 private:
  double momentum_;
  std::vector<std::vector<T>> velocity_;
};

// FTCK: magic, u32 version, u32 count, then per tensor u16 name length,
// name, u8 rank, u32 dims, f64 values; all little-endian.
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const std::vector<Param<T>>& params);
// Values are read into matching names/shapes of `params`.
template <typename T>
void load_checkpoint(const std::filesystem::path& path, std::vector<Param<T>>& params);
template <typename T>
std::string checkpoint_bytes(const std::vector<Param<T>>& params);

extern template class Model<float>;
extern template class Model<double>;
extern template class SimpleCnn<float>;
extern template class SimpleCnn<double>;
extern template class MiniResnet<float>;
extern template class MiniResnet<double>;
extern template class Sgd<float>;
extern template class Sgd<double>;

}  // namespace fedtopo::nn
