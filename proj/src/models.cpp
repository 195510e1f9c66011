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

#include "fedtopo/models.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fedtopo/text_io.hpp"

namespace fedtopo::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto& p : params_) p.grad.fill(T(0));
}

template <typename T>
std::vector<T> Model<T>::flat() const {
  std::vector<T> out;
  out.reserve(parameter_count());
  for (const auto& p : params_) out.insert(out.end(), p.value.data.begin(), p.value.data.end());
  return out;
}

template <typename T>
void Model<T>::set_flat(std::span<const T> values) {
  if (values.size() != parameter_count())
    throw std::invalid_argument("set_flat: " + std::to_string(values.size()) + " values for " +
                                std::to_string(parameter_count()) + " parameters");
  std::size_t off = 0;
  for (auto& p : params_) {
    std::copy(values.begin() + off, values.begin() + off + p.value.size(), p.value.data.begin());
    off += p.value.size();
  }
}

template <typename T>
void Model<T>::init(Rng& rng) {
  for (auto& p : params_) {
    if (p.value.rank() == 1) {
      p.value.fill(T(0));
      continue;
    }
    std::size_t fan_in = 1;
    for (std::size_t i = 1; i < p.value.rank(); ++i) fan_in *= p.value.dim(i);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : p.value.data) v = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
  }
}

template <typename T>
Param<T>& Model<T>::add_param(std::string name, std::vector<std::size_t> shape) {
  Param<T> p;
  p.name = std::move(name);
  p.value = Tensor<T>(shape);
  p.grad = Tensor<T>(shape);
  params_.push_back(std::move(p));
  return params_.back();
}

template <typename T>
void Model<T>::check_input(const Graph<T>& g, NodeId x) const {
  const auto& s = g.value(x).shape;
  const auto want = input_shape();
  if (s.size() != 4 || s[1] != want[0] || s[2] != want[1] || s[3] != want[2])
    throw std::invalid_argument(arch() + ": input shape " + shape_string(s) + ", expected (N, " +
                                std::to_string(want[0]) + ", " + std::to_string(want[1]) + ", " +
                                std::to_string(want[2]) + ")");
}

template <typename T>
SimpleCnn<T>::SimpleCnn(std::size_t classes) {
  this->add_param("conv1.weight", {6, 1, 5, 5});
  this->add_param("conv1.bias", {6});
  this->add_param("conv2.weight", {16, 6, 5, 5});
  this->add_param("conv2.bias", {16});
  this->add_param("fc1.weight", {120, 256});
  this->add_param("fc1.bias", {120});
  this->add_param("fc2.weight", {84, 120});
  this->add_param("fc2.bias", {84});
  this->add_param("fc3.weight", {classes, 84});
  this->add_param("fc3.bias", {classes});
}

template <typename T>
ForwardResult<T> SimpleCnn<T>::forward(Graph<T>& g, NodeId x, std::string_view stop_after) {
  this->check_input(g, x);
  ForwardResult<T> r;
  NodeId h = g.conv2d(x, this->bind(g, 0), this->bind(g, 1));
  r.taps["conv1"] = h;
  if (stop_after == "conv1") return r.logits = h, r;
  h = g.maxpool2d(g.relu(h), 2);
  h = g.conv2d(h, this->bind(g, 2), this->bind(g, 3));
  r.taps["conv2"] = h;
  if (stop_after == "conv2") return r.logits = h, r;
  h = g.flatten(g.maxpool2d(g.relu(h), 2));
  h = g.relu(g.linear(h, this->bind(g, 4), this->bind(g, 5)));
  h = g.relu(g.linear(h, this->bind(g, 6), this->bind(g, 7)));
  r.logits = g.linear(h, this->bind(g, 8), this->bind(g, 9));
  if (!stop_after.empty()) throw std::invalid_argument("simple_cnn: unknown block '" + std::string(stop_after) + "'");
  return r;
}

template <typename T>
MiniResnet<T>::MiniResnet(std::size_t in_channels, std::size_t size, std::size_t classes)
    : in_(in_channels), size_(size) {
  if (size < 4) throw std::invalid_argument("mini_resnet: input must be at least 4x4");
  this->add_param("conv1.weight", {16, in_channels, 3, 3});
  this->add_param("conv1.bias", {16});
  const std::size_t widths[] = {16, 32, 64};
  std::size_t prev = 16;
  for (int s = 0; s < 3; ++s) {
    const std::string name = "stage" + std::to_string(s + 1);
    const std::size_t w = widths[s];
    this->add_param(name + ".a.weight", {w, prev, 3, 3});
    this->add_param(name + ".a.bias", {w});
    this->add_param(name + ".b.weight", {w, w, 3, 3});
    this->add_param(name + ".b.bias", {w});
    if (s > 0) {
      this->add_param(name + ".proj.weight", {w, prev, 1, 1});
      this->add_param(name + ".proj.bias", {w});
    }
    prev = w;
  }
  this->add_param("fc.weight", {classes, 64});
  this->add_param("fc.bias", {classes});
}

template <typename T>
ForwardResult<T> MiniResnet<T>::forward(Graph<T>& g, NodeId x, std::string_view stop_after) {
  this->check_input(g, x);
  ForwardResult<T> r;
  std::size_t p = 0;
  auto next = [&]() { return this->bind(g, p++); };
  NodeId w0 = next(), b0 = next();
  NodeId h = g.conv2d(x, w0, b0, 1, 1);
  r.taps["conv1"] = h;
  if (stop_after == "conv1") return r.logits = h, r;
  h = g.relu(h);
  for (int s = 0; s < 3; ++s) {
    const std::size_t stride = s == 0 ? 1 : 2;
    NodeId wa = next(), ba = next();
    NodeId a = g.relu(g.conv2d(h, wa, ba, stride, 1));
    NodeId wb = next(), bb = next();
    NodeId b = g.conv2d(a, wb, bb, 1, 1);
    NodeId shortcut = h;
    if (s > 0) {
      NodeId wp = next(), bp = next();
      shortcut = g.conv2d(h, wp, bp, stride, 0);
    }
    h = g.relu(g.add(b, shortcut));
    const std::string name = "stage" + std::to_string(s + 1);
    r.taps[name] = h;
    if (stop_after == name) return r.logits = h, r;
  }
  h = g.global_avg_pool(h);
  NodeId wf = next(), bf = next();
  r.logits = g.linear(h, wf, bf);
  if (!stop_after.empty()) throw std::invalid_argument("mini_resnet: unknown block '" + std::string(stop_after) + "'");
  return r;
}

template <typename T>
std::unique_ptr<Model<T>> make_model(const std::string& arch, const std::vector<std::size_t>& input_shape,
                                     std::size_t classes) {
  if (arch == "simple_cnn") {
    if (input_shape != std::vector<std::size_t>{1, 28, 28})
      throw std::invalid_argument("simple_cnn needs 1x28x28 inputs, got " + shape_string(input_shape));
    return std::make_unique<SimpleCnn<T>>(classes);
  }
  if (arch == "mini_resnet") {
    if (input_shape.size() != 3 || input_shape[1] != input_shape[2])
      throw std::invalid_argument("mini_resnet needs square C x S x S inputs, got " + shape_string(input_shape));
    return std::make_unique<MiniResnet<T>>(input_shape[0], input_shape[1], classes);
  }
  throw std::invalid_argument("unknown architecture '" + arch + "'");
}

double StepLR::lr() const {
  if (step_size == 0) return lr0;
  return lr0 * std::pow(gamma, static_cast<double>(epoch / step_size));
}

template <typename T>
void Sgd<T>::step(std::vector<Param<T>>& params, double lr) {
  if (velocity_.size() != params.size()) {
    velocity_.clear();
    for (const auto& p : params) velocity_.emplace_back(p.value.size(), T(0));
  }
  const T mu = static_cast<T>(momentum_), eta = static_cast<T>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& v = velocity_[i];
    auto& w = params[i].value.data;
    const auto& g = params[i].grad.data;
    if (g.size() != w.size()) throw std::invalid_argument("sgd: gradient shape mismatch for " + params[i].name);
    for (std::size_t k = 0; k < w.size(); ++k) {
      v[k] = mu * v[k] + g[k];
      w[k] -= eta * v[k];
    }
  }
}

namespace {

constexpr char kMagic[4] = {'F', 'T', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename U>
void put(std::string& out, U v) {
  char b[sizeof(U)];
  std::memcpy(b, &v, sizeof(U));
  out.append(b, sizeof(U));
}

template <typename U>
U get(const std::string& in, std::size_t& off, const std::string& file) {
  if (off + sizeof(U) > in.size())
    throw std::runtime_error(file + ": byte " + std::to_string(off) + ": truncated checkpoint");
  U v;
  std::memcpy(&v, in.data() + off, sizeof(U));
  off += sizeof(U);
  return v;
}

}  // namespace

template <typename T>
std::string checkpoint_bytes(const std::vector<Param<T>>& params) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(p.name.size()));
    out += p.name;
    put<std::uint8_t>(out, static_cast<std::uint8_t>(p.value.rank()));
    for (std::size_t d : p.value.shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (T v : p.value.data) put<double>(out, static_cast<double>(v));
  }
  return out;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const std::vector<Param<T>>& params) {
  write_file_atomic(path, checkpoint_bytes(params));
}

template <typename T>
void load_checkpoint(const std::filesystem::path& path, std::vector<Param<T>>& params) {
  const std::string file = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + file);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw std::runtime_error(file + ": byte 0: not an FTCK checkpoint");
  std::size_t off = 4;
  const auto version = get<std::uint32_t>(bytes, off, file);
  if (version != kVersion) throw std::runtime_error(file + ": unsupported version " + std::to_string(version));
  const auto count = get<std::uint32_t>(bytes, off, file);
  if (count != params.size())
    throw std::runtime_error(file + ": holds " + std::to_string(count) + " tensors, model has " +
                             std::to_string(params.size()));
  for (auto& p : params) {
    const auto len = get<std::uint16_t>(bytes, off, file);
    if (off + len > bytes.size()) throw std::runtime_error(file + ": byte " + std::to_string(off) + ": truncated name");
    const std::string name = bytes.substr(off, len);
    off += len;
    if (name != p.name) throw std::runtime_error(file + ": tensor '" + name + "' where '" + p.name + "' expected");
    const auto rank = get<std::uint8_t>(bytes, off, file);
    std::vector<std::size_t> shape;
    for (std::uint8_t i = 0; i < rank; ++i) shape.push_back(get<std::uint32_t>(bytes, off, file));
    if (shape != p.value.shape)
      throw std::runtime_error(file + ": tensor '" + name + "' has shape " + shape_string(shape) + ", model expects " +
                               shape_string(p.value.shape));
    for (auto& v : p.value.data) v = static_cast<T>(get<double>(bytes, off, file));
  }
  if (off != bytes.size()) throw std::runtime_error(file + ": byte " + std::to_string(off) + ": trailing data");
}

template class Model<float>;
template class Model<double>;
template class SimpleCnn<float>;
template class SimpleCnn<double>;
template class MiniResnet<float>;
template class MiniResnet<double>;
template class Sgd<float>;
template class Sgd<double>;
template std::unique_ptr<Model<float>> make_model(const std::string&, const std::vector<std::size_t>&, std::size_t);
template std::unique_ptr<Model<double>> make_model(const std::string&, const std::vector<std::size_t>&, std::size_t);
template std::string checkpoint_bytes(const std::vector<Param<float>>&);
template std::string checkpoint_bytes(const std::vector<Param<double>>&);
template void save_checkpoint(const std::filesystem::path&, const std::vector<Param<float>>&);
template void save_checkpoint(const std::filesystem::path&, const std::vector<Param<double>>&);
template void load_checkpoint(const std::filesystem::path&, std::vector<Param<float>>&);
template void load_checkpoint(const std::filesystem::path&, std::vector<Param<double>>&);

}  // namespace fedtopo::nn
