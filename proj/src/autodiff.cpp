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

#include "fedtopo/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>

namespace fedtopo::nn {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? ", " : "") + std::to_string(shape[i]);
  return s + ")";
}

template <typename T>
Tensor<T>::Tensor(std::vector<std::size_t> s, T fill) : shape(std::move(s)), data(shape_size(shape), fill) {}

template <typename T>
Tensor<T>::Tensor(std::vector<std::size_t> s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != shape_size(shape))
    throw std::invalid_argument("tensor: " + std::to_string(data.size()) + " values for shape " + shape_string(shape));
}

template <typename T>
void Tensor<T>::fill(T v) {
  std::fill(data.begin(), data.end(), v);
}

namespace {

void require_rank(const std::vector<std::size_t>& shape, std::size_t rank, const char* op) {
  if (shape.size() != rank)
    throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                                shape_string(shape));
}

// Output positions o with 0 <= o*stride + k - pad < extent, as [lo, hi).
std::pair<std::size_t, std::size_t> valid_range(std::size_t extent, std::size_t out, std::size_t k, std::size_t stride,
                                                std::size_t pad) {
  const auto e = static_cast<long>(extent), kk = static_cast<long>(k), s = static_cast<long>(stride),
             p = static_cast<long>(pad);
  long lo = p > kk ? (p - kk + s - 1) / s : 0;
  long hi = e - 1 + p - kk >= 0 ? (e - 1 + p - kk) / s + 1 : 0;
  hi = std::min(hi, static_cast<long>(out));
  if (hi < lo) hi = lo;
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

struct TopoContext {
  std::vector<std::size_t> channels;
  // [sample][selected channel]
  std::vector<std::vector<topo::NormalizedField>> fields;
  std::vector<std::vector<ph::PersistenceDiagram>> diagrams;
  std::vector<std::vector<std::vector<topo::BirthPersistence>>> points;
};

std::vector<std::size_t> resolve_channels(std::span<const std::size_t> channels, std::size_t c) {
  std::vector<std::size_t> out(channels.begin(), channels.end());
  if (out.empty()) {
    out.resize(c);
    std::iota(out.begin(), out.end(), 0);
  }
  for (std::size_t ch : out)
    if (ch >= c) throw std::invalid_argument("topo_embedding: channel " + std::to_string(ch) + " out of range");
  return out;
}

}  // namespace

template <typename T>
NodeId Graph<T>::push(Tensor<T> value, bool needs_grad, std::function<void(Graph&, Node&)> back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

template <typename T>
Tensor<T>& Graph<T>::grad_of(NodeId id) {
  Node& n = nodes_[id];
  if (n.grad.data.empty()) n.grad = Tensor<T>(n.value.shape);
  return n.grad;
}

template <typename T>
NodeId Graph<T>::input(Tensor<T> value) {
  return push(std::move(value), false, {});
}

template <typename T>
NodeId Graph<T>::parameter(Param<T>& p) {
  NodeId id = push(p.value, true, {});
  nodes_[id].param = &p;
  return id;
}

template <typename T>
NodeId Graph<T>::conv2d(NodeId xi, NodeId wi, NodeId bi, std::size_t stride, std::size_t pad) {
  const Tensor<T>& x = value(xi);
  const Tensor<T>& w = value(wi);
  const Tensor<T>& b = value(bi);
  require_rank(x.shape, 4, "conv2d input");
  require_rank(w.shape, 4, "conv2d weight");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t o = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != c)
    throw std::invalid_argument("conv2d: input has " + std::to_string(c) + " channels, weight expects " +
                                std::to_string(w.dim(1)));
  if (b.size() != o) throw std::invalid_argument("conv2d: bias size mismatch");
  if (stride == 0 || h + 2 * pad < kh || wd + 2 * pad < kw) throw std::invalid_argument("conv2d: kernel larger than input");
  const std::size_t ho = (h + 2 * pad - kh) / stride + 1, wo = (wd + 2 * pad - kw) / stride + 1;
  Tensor<T> out({n, o, ho, wo});

  for (std::size_t ni = 0; ni < n; ++ni)
    for (std::size_t oi = 0; oi < o; ++oi) {
      T* plane = out.data.data() + (ni * o + oi) * ho * wo;
      std::fill(plane, plane + ho * wo, b.data[oi]);
      for (std::size_t ci = 0; ci < c; ++ci) {
        const T* xp = x.data.data() + (ni * c + ci) * h * wd;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          auto [ylo, yhi] = valid_range(h, ho, ky, stride, pad);
          for (std::size_t kx = 0; kx < kw; ++kx) {
            auto [xlo, xhi] = valid_range(wd, wo, kx, stride, pad);
            const T wv = w.data[((oi * c + ci) * kh + ky) * kw + kx];
            for (std::size_t oy = ylo; oy < yhi; ++oy) {
              const T* xr = xp + (oy * stride + ky - pad) * wd + kx - pad;
              T* orow = plane + oy * wo;
              for (std::size_t ox = xlo; ox < xhi; ++ox) orow[ox] += wv * xr[ox * stride];
            }
          }
        }
      }
    }

  const bool ng = needs(xi) || needs(wi) || needs(bi);
  return push(std::move(out), ng, [=](Graph& g, Node& self) {
    const Tensor<T>& gout = self.grad;
    const Tensor<T>& x = g.value(xi);
    const Tensor<T>& w = g.value(wi);
    T* dx = g.needs(xi) ? g.grad_of(xi).data.data() : nullptr;
    T* dw = g.needs(wi) ? g.grad_of(wi).data.data() : nullptr;
    T* db = g.needs(bi) ? g.grad_of(bi).data.data() : nullptr;
    for (std::size_t ni = 0; ni < n; ++ni)
      for (std::size_t oi = 0; oi < o; ++oi) {
        const T* gp = gout.data.data() + (ni * o + oi) * ho * wo;
        if (db) {
          T s = 0;
          for (std::size_t k = 0; k < ho * wo; ++k) s += gp[k];
          db[oi] += s;
        }
        for (std::size_t ci = 0; ci < c; ++ci) {
          const T* xp = x.data.data() + (ni * c + ci) * h * wd;
          T* dxp = dx ? dx + (ni * c + ci) * h * wd : nullptr;
          for (std::size_t ky = 0; ky < kh; ++ky) {
            auto [ylo, yhi] = valid_range(h, ho, ky, stride, pad);
            for (std::size_t kx = 0; kx < kw; ++kx) {
              auto [xlo, xhi] = valid_range(wd, wo, kx, stride, pad);
              const std::size_t widx = ((oi * c + ci) * kh + ky) * kw + kx;
              const T wv = w.data[widx];
              T acc = 0;
              for (std::size_t oy = ylo; oy < yhi; ++oy) {
                const std::size_t off = (oy * stride + ky - pad) * wd + kx - pad;
                const T* grow = gp + oy * wo;
                const T* xr = xp + off;
                if (dw)
                  for (std::size_t ox = xlo; ox < xhi; ++ox) acc += grow[ox] * xr[ox * stride];
                if (dxp) {
                  T* dr = dxp + off;
                  for (std::size_t ox = xlo; ox < xhi; ++ox) dr[ox * stride] += wv * grow[ox];
                }
              }
              if (dw) dw[widx] += acc;
            }
          }
        }
      }
  });
}

template <typename T>
NodeId Graph<T>::maxpool2d(NodeId xi, std::size_t k) {
  const Tensor<T>& x = value(xi);
  require_rank(x.shape, 4, "maxpool2d");
  if (k == 0) throw std::invalid_argument("maxpool2d: window must be positive");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = h / k, wo = w / k;
  if (ho == 0 || wo == 0) throw std::invalid_argument("maxpool2d: window larger than input");
  Tensor<T> out({n, c, ho, wo});
  auto arg = std::make_shared<std::vector<std::size_t>>(out.size());
  for (std::size_t p = 0; p < n * c; ++p) {
    const T* xp = x.data.data() + p * h * w;
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        std::size_t best = oy * k * w + ox * k;
        for (std::size_t dy = 0; dy < k; ++dy)
          for (std::size_t dx = 0; dx < k; ++dx) {
            const std::size_t idx = (oy * k + dy) * w + ox * k + dx;
            if (xp[idx] > xp[best]) best = idx;
          }
        const std::size_t o = (p * ho + oy) * wo + ox;
        out.data[o] = xp[best];
        (*arg)[o] = p * h * w + best;
      }
  }
  return push(std::move(out), needs(xi), [=](Graph& g, Node& self) {
    T* dx = g.grad_of(xi).data.data();
    for (std::size_t o = 0; o < arg->size(); ++o) dx[(*arg)[o]] += self.grad.data[o];
  });
}

template <typename T>
NodeId Graph<T>::linear(NodeId xi, NodeId wi, NodeId bi) {
  const Tensor<T>& x = value(xi);
  const Tensor<T>& w = value(wi);
  const Tensor<T>& b = value(bi);
  require_rank(x.shape, 2, "linear input");
  require_rank(w.shape, 2, "linear weight");
  const std::size_t n = x.dim(0), in = x.dim(1), out_f = w.dim(0);
  if (w.dim(1) != in)
    throw std::invalid_argument("linear: input has " + std::to_string(in) + " features, weight expects " +
                                std::to_string(w.dim(1)));
  if (b.size() != out_f) throw std::invalid_argument("linear: bias size mismatch");
  Tensor<T> out({n, out_f});
  for (std::size_t ni = 0; ni < n; ++ni)
    for (std::size_t j = 0; j < out_f; ++j) {
      const T* xr = x.data.data() + ni * in;
      const T* wr = w.data.data() + j * in;
      T s = b.data[j];
      for (std::size_t i = 0; i < in; ++i) s += wr[i] * xr[i];
      out.data[ni * out_f + j] = s;
    }
  const bool ng = needs(xi) || needs(wi) || needs(bi);
  return push(std::move(out), ng, [=](Graph& g, Node& self) {
    const T* gp = self.grad.data.data();
    const Tensor<T>& x = g.value(xi);
    const Tensor<T>& w = g.value(wi);
    T* dx = g.needs(xi) ? g.grad_of(xi).data.data() : nullptr;
    T* dw = g.needs(wi) ? g.grad_of(wi).data.data() : nullptr;
    T* db = g.needs(bi) ? g.grad_of(bi).data.data() : nullptr;
    for (std::size_t ni = 0; ni < n; ++ni)
      for (std::size_t j = 0; j < out_f; ++j) {
        const T gv = gp[ni * out_f + j];
        if (db) db[j] += gv;
        if (dw) {
          T* dwr = dw + j * in;
          const T* xr = x.data.data() + ni * in;
          for (std::size_t i = 0; i < in; ++i) dwr[i] += gv * xr[i];
        }
        if (dx) {
          T* dxr = dx + ni * in;
          const T* wr = w.data.data() + j * in;
          for (std::size_t i = 0; i < in; ++i) dxr[i] += gv * wr[i];
        }
      }
  });
}

template <typename T>
NodeId Graph<T>::relu(NodeId xi) {
  Tensor<T> out = value(xi);
  for (auto& v : out.data) v = v > T(0) ? v : T(0);
  return push(std::move(out), needs(xi), [=](Graph& g, Node& self) {
    const auto& x = g.value(xi).data;
    T* dx = g.grad_of(xi).data.data();
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i] > T(0)) dx[i] += self.grad.data[i];
  });
}

template <typename T>
NodeId Graph<T>::add(NodeId ai, NodeId bi) {
  if (value(ai).shape != value(bi).shape)
    throw std::invalid_argument("add: shapes " + shape_string(value(ai).shape) + " and " +
                                shape_string(value(bi).shape));
  Tensor<T> out = value(ai);
  const auto& b = value(bi).data;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b[i];
  return push(std::move(out), needs(ai) || needs(bi), [=](Graph& g, Node& self) {
    for (NodeId id : {ai, bi}) {
      if (!g.needs(id)) continue;
      T* d = g.grad_of(id).data.data();
      for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad.data[i];
    }
  });
}

template <typename T>
NodeId Graph<T>::scale(NodeId ai, T s) {
  Tensor<T> out = value(ai);
  for (auto& v : out.data) v *= s;
  return push(std::move(out), needs(ai), [=](Graph& g, Node& self) {
    T* d = g.grad_of(ai).data.data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += s * self.grad.data[i];
  });
}

template <typename T>
NodeId Graph<T>::flatten(NodeId xi) {
  Tensor<T> out = value(xi);
  if (out.rank() < 1) throw std::invalid_argument("flatten: scalar input");
  const std::size_t n = out.dim(0);
  out.shape = {n, n ? out.size() / n : 0};
  return push(std::move(out), needs(xi), [=](Graph& g, Node& self) {
    T* d = g.grad_of(xi).data.data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad.data[i];
  });
}

template <typename T>
NodeId Graph<T>::global_avg_pool(NodeId xi) {
  const Tensor<T>& x = value(xi);
  require_rank(x.shape, 4, "global_avg_pool");
  const std::size_t nc = x.dim(0) * x.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor<T> out({x.dim(0), x.dim(1)});
  for (std::size_t p = 0; p < nc; ++p) {
    T s = 0;
    for (std::size_t k = 0; k < plane; ++k) s += x.data[p * plane + k];
    out.data[p] = s / static_cast<T>(plane);
  }
  return push(std::move(out), needs(xi), [=](Graph& g, Node& self) {
    T* d = g.grad_of(xi).data.data();
    for (std::size_t p = 0; p < nc; ++p) {
      const T gv = self.grad.data[p] / static_cast<T>(plane);
      for (std::size_t k = 0; k < plane; ++k) d[p * plane + k] += gv;
    }
  });
}

template <typename T>
NodeId Graph<T>::sum(NodeId xi) {
  const auto& x = value(xi).data;
  T s = 0;
  for (T v : x) s += v;
  return push(Tensor<T>({1}, std::vector<T>{s}), needs(xi), [=](Graph& g, Node& self) {
    T* d = g.grad_of(xi).data.data();
    const T gv = self.grad.data[0];
    for (std::size_t i = 0; i < g.value(xi).size(); ++i) d[i] += gv;
  });
}

template <typename T>
NodeId Graph<T>::softmax_cross_entropy(NodeId li, std::span<const int> labels) {
  const Tensor<T>& logits = value(li);
  require_rank(logits.shape, 2, "softmax_cross_entropy");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
  if (n == 0) throw std::invalid_argument("softmax_cross_entropy: empty batch");
  auto probs = std::make_shared<std::vector<T>>(n * k);
  std::vector<int> lab(labels.begin(), labels.end());
  T total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (lab[i] < 0 || static_cast<std::size_t>(lab[i]) >= k)
      throw std::invalid_argument("softmax_cross_entropy: label out of range");
    const T* row = logits.data.data() + i * k;
    const T top = *std::max_element(row, row + k);
    T z = 0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - top);
    for (std::size_t j = 0; j < k; ++j) (*probs)[i * k + j] = std::exp(row[j] - top) / z;
    total += std::log(z) + top - row[lab[i]];
  }
  const T mean = total / static_cast<T>(n);
  return push(Tensor<T>({1}, std::vector<T>{mean}), needs(li), [=](Graph& g, Node& self) {
    T* d = g.grad_of(li).data.data();
    const T gv = self.grad.data[0] / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        const T onehot = static_cast<std::size_t>(lab[i]) == j ? T(1) : T(0);
        d[i * k + j] += gv * ((*probs)[i * k + j] - onehot);
      }
  });
}

template <typename T>
NodeId Graph<T>::squared_distance(NodeId ai, const Tensor<T>& ref) {
  const Tensor<T>& a = value(ai);
  if (a.shape != ref.shape)
    throw std::invalid_argument("squared_distance: shapes " + shape_string(a.shape) + " and " + shape_string(ref.shape));
  if (a.rank() < 1 || a.dim(0) == 0) throw std::invalid_argument("squared_distance: empty batch");
  const std::size_t n = a.dim(0);
  auto diff = std::make_shared<std::vector<T>>(a.size());
  T s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    (*diff)[i] = a.data[i] - ref.data[i];
    s += (*diff)[i] * (*diff)[i];
  }
  return push(Tensor<T>({1}, std::vector<T>{s / static_cast<T>(n)}), needs(ai), [=](Graph& g, Node& self) {
    T* d = g.grad_of(ai).data.data();
    const T gv = T(2) * self.grad.data[0] / static_cast<T>(n);
    for (std::size_t i = 0; i < diff->size(); ++i) d[i] += gv * (*diff)[i];
  });
}

template <typename T>
NodeId Graph<T>::topo_embedding(NodeId xi, const topo::PIConfig& config, std::span<const std::size_t> channels,
                                bool detach) {
  config.validate();
  const Tensor<T>& x = value(xi);
  require_rank(x.shape, 4, "topo_embedding");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h < 2 || w < 2)
    throw std::invalid_argument("topo_embedding: activation is " + std::to_string(h) + "x" + std::to_string(w) +
                                ", needs at least 2x2");
  auto ctx = std::make_shared<TopoContext>();
  ctx->channels = resolve_channels(channels, c);
  const std::size_t k = ctx->channels.size(), m = config.size(), plane = h * w;
  Tensor<T> out({n, m});
  ctx->fields.resize(n);
  ctx->diagrams.resize(n);
  ctx->points.resize(n);
  std::vector<double> buf(plane);
  for (std::size_t ni = 0; ni < n; ++ni) {
    std::vector<double> acc(m, 0.0);
    for (std::size_t ch : ctx->channels) {
      const T* src = x.data.data() + (ni * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) buf[i] = static_cast<double>(src[i]);
      auto nf = topo::minmax_normalize(ph::ScalarField(h, w, buf));
      auto dg = ph::compute_diagram(nf.field);
      auto pts = topo::pooled_points(dg);
      auto img = topo::rasterize_pi(pts, config);
      for (std::size_t i = 0; i < m; ++i) acc[i] += img.values[i];
      ctx->fields[ni].push_back(std::move(nf));
      ctx->diagrams[ni].push_back(std::move(dg));
      ctx->points[ni].push_back(std::move(pts));
    }
    for (std::size_t i = 0; i < m; ++i) out.data[ni * m + i] = static_cast<T>(acc[i] / static_cast<double>(k));
  }
  return push(std::move(out), needs(xi) && !detach, [=](Graph& g, Node& self) {
    T* dx = g.grad_of(xi).data.data();
    std::vector<double> g_img(m);
    for (std::size_t ni = 0; ni < n; ++ni) {
      bool any = false;
      for (std::size_t i = 0; i < m; ++i) {
        g_img[i] = static_cast<double>(self.grad.data[ni * m + i]) / static_cast<double>(k);
        any = any || g_img[i] != 0.0;
      }
      if (!any) continue;
      for (std::size_t j = 0; j < k; ++j) {
        const auto& pts = ctx->points[ni][j];
        const auto& dg = ctx->diagrams[ni][j];
        auto pg = topo::pi_backward(pts, config, g_img);
        auto field = ph::pd_backward(dg, topo::to_pair_gradients(dg, pts, pg));
        auto raw = topo::minmax_backward(ctx->fields[ni][j], field.values());
        T* dst = dx + (ni * c + ctx->channels[j]) * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] += static_cast<T>(raw[i]);
      }
    }
  });
}

template <typename T>
void Graph<T>::backward(NodeId loss) {
  if (loss >= nodes_.size()) throw std::out_of_range("backward: unknown node");
  if (nodes_[loss].value.size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_string(nodes_[loss].value.shape));
  grad_of(loss).data[0] = T(1);
  for (std::size_t i = loss + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.needs_grad || node.grad.data.empty()) continue;
    if (node.param) {
      Tensor<T>& pg = node.param->grad;
      if (pg.data.empty()) pg = Tensor<T>(node.value.shape);
      for (std::size_t k = 0; k < pg.size(); ++k) pg.data[k] += node.grad.data[k];
    }
    if (node.back) node.back(*this, node);
  }
}

std::vector<double> topo_embedding_of(std::span<const double> chw, std::size_t c, std::size_t h, std::size_t w,
                                      const topo::PIConfig& config, std::span<const std::size_t> channels) {
  if (chw.size() != c * h * w) throw std::invalid_argument("topo_embedding_of: size mismatch");
  Graph<double> g;
  NodeId x = g.input(Tensor<double>({1, c, h, w}, std::vector<double>(chw.begin(), chw.end())));
  return g.value(g.topo_embedding(x, config, channels, true)).data;
}

template struct Tensor<float>;
template struct Tensor<double>;
template class Graph<float>;
template class Graph<double>;

}  // namespace fedtopo::nn
