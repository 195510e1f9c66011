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

#include "fedtopo/grid_ph.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

#include "fedtopo/text_io.hpp"

namespace fedtopo::ph {

namespace {

constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

using Column = std::vector<std::uint32_t>;

// a <- a xor b, both sorted ascending.
void add_column(Column& a, const Column& b, Column& scratch) {
  scratch.clear();
  std::set_symmetric_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(scratch));
  a.swap(scratch);
}

struct Grid {
  std::size_t h, w, rows, cols;
  explicit Grid(std::size_t height, std::size_t width)
      : h(height), w(width), rows(2 * height - 1), cols(2 * width - 1) {}

  std::uint32_t id(std::size_t r, std::size_t c) const { return static_cast<std::uint32_t>(r * cols + c); }
  std::uint32_t vertex_id(std::size_t flat) const { return id(2 * (flat / w), 2 * (flat % w)); }
};

// Argmax vertex of the cell at doubled-grid (r, c); ties go to the smallest
// flat pixel index, which is also the first one visited here.
std::uint32_t argmax_vertex(const ScalarField& f, std::size_t r, std::size_t c) {
  const std::size_t r0 = r / 2, r1 = (r + 1) / 2;
  const std::size_t c0 = c / 2, c1 = (c + 1) / 2;
  std::size_t best = r0 * f.width() + c0;
  for (std::size_t vr = r0; vr <= r1; ++vr) {
    for (std::size_t vc = c0; vc <= c1; ++vc) {
      const std::size_t flat = vr * f.width() + vc;
      if (f[flat] > f[best]) best = flat;
    }
  }
  return static_cast<std::uint32_t>(best);
}

void check_extent(std::size_t h, std::size_t w) {
  if (h == 0 || w == 0) throw std::invalid_argument("scalar field must have positive height and width");
  if (2 * h - 1 > 65535 || 2 * w - 1 > 65535) throw std::invalid_argument("scalar field too large");
}

PersistencePair make_pair(int dim, const ScalarField& f, std::uint32_t birth_cell, std::uint32_t birth_vertex,
                          std::uint32_t death_cell, std::uint32_t death_vertex) {
  PersistencePair p;
  p.dim = dim;
  p.birth = f[birth_vertex];
  p.birth_cell = birth_cell;
  p.birth_vertex = birth_vertex;
  if (death_cell != kNone) {
    p.death = f[death_vertex];
    p.death_cell = death_cell;
    p.death_vertex = death_vertex;
  }
  return p;
}

struct UnionFind {
  std::vector<std::uint32_t> parent;
  std::vector<std::uint32_t> oldest;  // oldest vertex of each root's component

  explicit UnionFind(std::size_t n) : parent(n), oldest(n) {
    std::iota(parent.begin(), parent.end(), 0u);
    std::iota(oldest.begin(), oldest.end(), 0u);
  }

  std::uint32_t find(std::uint32_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
};

// Vertex filtration order: (value, flat index), matching (value, dim, id) on
// the doubled grid because vertex ids grow with the flat index.
bool vertex_before(const ScalarField& f, std::uint32_t a, std::uint32_t b) {
  return f[a] < f[b] || (f[a] == f[b] && a < b);
}

struct EdgeRecord {
  double value;
  std::uint32_t id;
  std::uint32_t a, b;  // endpoint flat indices
  std::uint32_t max_vertex;
};

std::vector<EdgeRecord> sorted_edges(const ScalarField& f, const Grid& g) {
  std::vector<EdgeRecord> edges;
  edges.reserve(g.h * (g.w - 1) + g.w * (g.h - 1));
  for (std::size_t r = 0; r < g.rows; ++r) {
    for (std::size_t c = (r % 2 == 0) ? 1 : 0; c < g.cols; c += 2) {
      std::uint32_t a, b;
      if (r % 2 == 0) {
        a = static_cast<std::uint32_t>((r / 2) * g.w + (c - 1) / 2);
        b = a + 1;
      } else {
        a = static_cast<std::uint32_t>(((r - 1) / 2) * g.w + c / 2);
        b = static_cast<std::uint32_t>(a + g.w);
      }
      const std::uint32_t mv = f[b] > f[a] ? b : a;
      edges.push_back({f[mv], g.id(r, c), a, b, mv});
    }
  }
  std::sort(edges.begin(), edges.end(), [](const EdgeRecord& x, const EdgeRecord& y) {
    return x.value < y.value || (x.value == y.value && x.id < y.id);
  });
  return edges;
}

void h0_union_find(const ScalarField& f, const Grid& g, const std::vector<EdgeRecord>& edges,
                   PersistenceDiagram& out) {
  UnionFind uf(f.size());
  for (const auto& e : edges) {
    std::uint32_t ra = uf.find(e.a), rb = uf.find(e.b);
    if (ra == rb) continue;
    std::uint32_t oa = uf.oldest[ra], ob = uf.oldest[rb];
    // Elder rule: the component born later dies at this edge.
    if (vertex_before(f, ob, oa)) {
      std::swap(ra, rb);
      std::swap(oa, ob);
    }
    if (e.value > f[ob]) {
      out.pairs.push_back(make_pair(0, f, g.vertex_id(ob), ob, e.id, e.max_vertex));
    }
    uf.parent[rb] = ra;
  }
  std::uint32_t root = 0;
  for (std::uint32_t v = 1; v < f.size(); ++v) {
    if (vertex_before(f, v, root)) root = v;
  }
  out.pairs.push_back(make_pair(0, f, g.vertex_id(root), root, kNone, kNone));
}

}  // namespace

ScalarField::ScalarField(std::size_t height, std::size_t width, std::vector<double> values)
    : height_(height), width_(width), values_(std::move(values)) {
  check_extent(height, width);
  if (values_.size() != height * width) {
    throw std::invalid_argument("scalar field: expected " + std::to_string(height * width) + " values, got " +
                                std::to_string(values_.size()));
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw std::invalid_argument("scalar field: non-finite value at row " + std::to_string(i / width) +
                                  ", column " + std::to_string(i % width));
    }
  }
}

ScalarField ScalarField::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t h = rows.size();
  const std::size_t w = h ? rows.begin()->size() : 0;
  std::vector<double> v;
  v.reserve(h * w);
  for (const auto& row : rows) {
    if (row.size() != w) throw std::invalid_argument("scalar field: ragged rows");
    v.insert(v.end(), row.begin(), row.end());
  }
  return ScalarField(h, w, std::move(v));
}

std::vector<PersistencePair> PersistenceDiagram::in_dimension(int dim) const {
  std::vector<PersistencePair> out;
  for (const auto& p : pairs) {
    if (p.dim == dim) out.push_back(p);
  }
  return out;
}

std::size_t PersistenceDiagram::essential_count(int dim) const {
  return static_cast<std::size_t>(
      std::count_if(pairs.begin(), pairs.end(), [dim](const auto& p) { return p.dim == dim && p.essential(); }));
}

std::size_t cell_count(std::size_t h, std::size_t w) { return 4 * h * w - 2 * h - 2 * w + 1; }

FilteredComplex build_lower_star(const ScalarField& field) {
  check_extent(field.height(), field.width());
  const Grid g(field.height(), field.width());
  FilteredComplex cx;
  cx.height = g.h;
  cx.width = g.w;
  cx.cells.resize(g.rows * g.cols);
  cx.boundary.resize(cx.cells.size());
  for (std::size_t r = 0; r < g.rows; ++r) {
    for (std::size_t c = 0; c < g.cols; ++c) {
      const auto id = g.id(r, c);
      Cell& cell = cx.cells[id];
      cell.dim = static_cast<std::uint8_t>((r & 1) + (c & 1));
      cell.row = static_cast<std::uint32_t>(r);
      cell.col = static_cast<std::uint32_t>(c);
      cell.max_vertex = argmax_vertex(field, r, c);
      cell.value = field[cell.max_vertex];
      auto& facets = cx.boundary[id];
      if (r & 1) {
        facets.push_back(g.id(r - 1, c));
        facets.push_back(g.id(r + 1, c));
      }
      if (c & 1) {
        facets.push_back(g.id(r, c - 1));
        facets.push_back(g.id(r, c + 1));
      }
      std::sort(facets.begin(), facets.end());
    }
  }
  cx.order.resize(cx.cells.size());
  std::iota(cx.order.begin(), cx.order.end(), 0u);
  std::sort(cx.order.begin(), cx.order.end(), [&](std::uint32_t a, std::uint32_t b) {
    const Cell& x = cx.cells[a];
    const Cell& y = cx.cells[b];
    if (x.value != y.value) return x.value < y.value;
    if (x.dim != y.dim) return x.dim < y.dim;
    return a < b;
  });
  return cx;
}

void FilteredComplex::validate() const {
  if (boundary.size() != cells.size() || order.size() != cells.size()) {
    throw std::invalid_argument("filtered complex: cells, boundary and order sizes differ");
  }
  std::vector<std::uint32_t> pos(cells.size(), kNone);
  for (std::uint32_t i = 0; i < order.size(); ++i) {
    if (order[i] >= cells.size() || pos[order[i]] != kNone) {
      throw std::invalid_argument("filtered complex: order is not a permutation of the cells");
    }
    pos[order[i]] = i;
  }
  for (std::uint32_t id = 0; id < cells.size(); ++id) {
    for (auto facet : boundary[id]) {
      if (facet >= cells.size()) throw std::invalid_argument("filtered complex: facet id out of range");
      if (cells[facet].dim + 1 != cells[id].dim) {
        throw std::invalid_argument("filtered complex: facet of cell " + std::to_string(id) +
                                    " has the wrong dimension");
      }
      if (pos[facet] >= pos[id]) {
        throw std::invalid_argument("filtered complex: malformed boundary, facet " + std::to_string(facet) +
                                    " enters after its coface " + std::to_string(id));
      }
    }
  }
}

PersistenceDiagram compute_persistence(const FilteredComplex& cx) {
  cx.validate();
  const std::size_t n = cx.cells.size();
  std::vector<std::uint32_t> pos(n);
  for (std::uint32_t i = 0; i < n; ++i) pos[cx.order[i]] = i;

  PersistenceDiagram out;
  out.height = cx.height;
  out.width = cx.width;

  std::vector<std::uint32_t> pivot_owner(n, kNone);  // row position -> column position
  std::vector<Column> reduced(n);
  std::vector<bool> paired(n, false);  // by position: appeared as birth or death
  Column scratch;

  auto reduce_dimension = [&](std::uint8_t dim) {
    for (std::uint32_t j = 0; j < n; ++j) {
      const std::uint32_t id = cx.order[j];
      if (cx.cells[id].dim != dim) continue;
      if (paired[j]) continue;  // cleared
      Column col;
      col.reserve(cx.boundary[id].size());
      for (auto f : cx.boundary[id]) col.push_back(pos[f]);
      std::sort(col.begin(), col.end());
      while (!col.empty() && pivot_owner[col.back()] != kNone) {
        add_column(col, reduced[pivot_owner[col.back()]], scratch);
      }
      if (col.empty()) continue;
      const std::uint32_t low = col.back();
      pivot_owner[low] = j;
      paired[low] = true;
      paired[j] = true;
      const Cell& birth = cx.cells[cx.order[low]];
      const Cell& death = cx.cells[id];
      if (death.value > birth.value) {
        PersistencePair p;
        p.dim = dim - 1;
        p.birth = birth.value;
        p.death = death.value;
        p.birth_cell = cx.order[low];
        p.death_cell = id;
        p.birth_vertex = birth.max_vertex;
        p.death_vertex = death.max_vertex;
        out.pairs.push_back(p);
      }
      reduced[j] = std::move(col);
    }
  };

  reduce_dimension(2);
  reduce_dimension(1);

  // Unpaired vertices and edges are essential classes.
  for (std::uint32_t j = 0; j < n; ++j) {
    const Cell& c = cx.cells[cx.order[j]];
    if (paired[j] || c.dim == 2) continue;
    if (c.dim == 1) {
      // An unpaired edge whose column did not reduce to zero is negative and
      // would have been paired; reaching here means it is a cycle that
      // never dies, which a grid cannot carry, but the complex may be custom.
      Column col;
      for (auto f : cx.boundary[cx.order[j]]) col.push_back(pos[f]);
      std::sort(col.begin(), col.end());
      while (!col.empty() && pivot_owner[col.back()] != kNone) {
        add_column(col, reduced[pivot_owner[col.back()]], scratch);
      }
      if (!col.empty()) continue;
    }
    PersistencePair p;
    p.dim = c.dim;
    p.birth = c.value;
    p.birth_cell = cx.order[j];
    p.birth_vertex = c.max_vertex;
    out.pairs.push_back(p);
  }
  return out;
}

PersistenceDiagram compute_h0_fast(const ScalarField& field) {
  check_extent(field.height(), field.width());
  const Grid g(field.height(), field.width());
  PersistenceDiagram out;
  out.height = g.h;
  out.width = g.w;
  h0_union_find(field, g, sorted_edges(field, g), out);
  return out;
}

PersistenceDiagram compute_diagram(const ScalarField& field) {
  check_extent(field.height(), field.width());
  const Grid g(field.height(), field.width());
  PersistenceDiagram out;
  out.height = g.h;
  out.width = g.w;
  const auto edges = sorted_edges(field, g);
  h0_union_find(field, g, edges, out);
  if (g.h < 2 || g.w < 2) return out;

  // Edge cell id -> rank in the edge order.
  std::vector<std::uint32_t> rank_of(g.rows * g.cols, kNone);
  for (std::uint32_t k = 0; k < edges.size(); ++k) rank_of[edges[k].id] = k;

  struct SquareRecord {
    double value;
    std::uint32_t id;
    std::uint32_t max_vertex;
  };
  std::vector<SquareRecord> squares;
  squares.reserve((g.h - 1) * (g.w - 1));
  for (std::size_t r = 1; r < g.rows; r += 2) {
    for (std::size_t c = 1; c < g.cols; c += 2) {
      const auto mv = argmax_vertex(field, r, c);
      squares.push_back({field[mv], g.id(r, c), mv});
    }
  }
  std::sort(squares.begin(), squares.end(), [](const SquareRecord& x, const SquareRecord& y) {
    return x.value < y.value || (x.value == y.value && x.id < y.id);
  });

  std::vector<std::uint32_t> pivot_owner(edges.size(), kNone);
  std::vector<Column> reduced(squares.size());
  Column col, scratch;
  for (std::uint32_t s = 0; s < squares.size(); ++s) {
    const std::uint32_t id = squares[s].id;
    col = {rank_of[id - g.cols], rank_of[id - 1], rank_of[id + 1], rank_of[id + g.cols]};
    std::sort(col.begin(), col.end());
    while (!col.empty() && pivot_owner[col.back()] != kNone) {
      add_column(col, reduced[pivot_owner[col.back()]], scratch);
    }
    if (col.empty()) continue;
    const std::uint32_t low = col.back();
    pivot_owner[low] = s;
    const EdgeRecord& e = edges[low];
    if (squares[s].value > e.value) {
      out.pairs.push_back(make_pair(1, field, e.id, e.max_vertex, id, squares[s].max_vertex));
    }
    reduced[s] = col;
  }
  return out;
}

ScalarField pd_backward(const PersistenceDiagram& diagram, std::span<const PairGradient> grads) {
  if (grads.size() != diagram.pairs.size()) {
    throw std::invalid_argument("pd_backward: " + std::to_string(grads.size()) + " gradients for " +
                                std::to_string(diagram.pairs.size()) + " pairs");
  }
  std::vector<double> g(diagram.height * diagram.width, 0.0);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const auto& p = diagram.pairs[i];
    if (!p.birth_vertex || (!p.essential() && !p.death_vertex)) {
      throw std::invalid_argument("pd_backward: pair " + std::to_string(i) + " has no critical-cell provenance");
    }
    g.at(*p.birth_vertex) += grads[i].d_birth;
    if (!p.essential()) g.at(*p.death_vertex) += grads[i].d_death;
  }
  return ScalarField(diagram.height, diagram.width, std::move(g));
}

void write_diagram_csv(std::ostream& out, const PersistenceDiagram& diagram) {
  out << "dim,birth,death\n";
  for (const auto& p : diagram.pairs) {
    out << p.dim << ',' << format_double(p.birth) << ',' << format_double(p.death) << '\n';
  }
}

PersistenceDiagram read_diagram_csv(std::istream& in) {
  PersistenceDiagram d;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    auto t = trim(line);
    if (t.empty()) continue;
    if (!header) {
      if (t != "dim,birth,death") {
        throw std::invalid_argument("diagram csv line " + std::to_string(line_no) + ": expected header dim,birth,death");
      }
      header = true;
      continue;
    }
    auto parts = split(t, ',');
    double dim = 0;
    PersistencePair p;
    if (parts.size() != 3 || !parse_double(parts[0], dim) || !parse_double(parts[1], p.birth) ||
        !parse_double(parts[2], p.death) || (dim != 0 && dim != 1)) {
      throw std::invalid_argument("diagram csv line " + std::to_string(line_no) + ": malformed row");
    }
    p.dim = static_cast<int>(dim);
    d.pairs.push_back(p);
  }
  if (!header) throw std::invalid_argument("diagram csv: missing header");
  return d;
}

}  // namespace fedtopo::ph
