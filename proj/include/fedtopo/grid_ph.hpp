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

// Sublevel persistent homology of 2-D scalar fields on cubical grids.
//
// A field of H x W vertex values is extended to the full cubical complex
// (vertices, edges, unit squares) by the lower-star rule: every cell takes the
// maximum value of its vertices. Cells live on the "doubled grid" of size
// (2H-1) x (2W-1): position (2r, 2c) is vertex (r, c), (even, odd) positions
// are horizontal edges, (odd, even) vertical edges and (odd, odd) squares. A
// cell's id is its row-major position on that grid, which is also the final
// tie-breaker of the filtration order.

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace fedtopo::ph {

class ScalarField {
 public:
  ScalarField() = default;
  // Throws std::invalid_argument on a size mismatch, an empty extent or a
  // non-finite value (the message names the offending row and column).
  ScalarField(std::size_t height, std::size_t width, std::vector<double> values);

  static ScalarField from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return values_.size(); }
  double at(std::size_t row, std::size_t col) const { return values_[row * width_ + col]; }
  double operator[](std::size_t flat) const { return values_[flat]; }
  std::span<const double> values() const { return values_; }

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> values_;
};

struct Cell {
  std::uint8_t dim = 0;
  std::uint32_t row = 0;  // doubled-grid coordinates
  std::uint32_t col = 0;
  double value = 0.0;
  // Flat pixel index of the vertex attaining `value`; the smallest such
  // index when several vertices tie.
  std::uint32_t max_vertex = 0;
};

struct FilteredComplex {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Cell> cells;                           // indexed by cell id
  std::vector<std::vector<std::uint32_t>> boundary;  // facet ids per cell
  std::vector<std::uint32_t> order;                  // cell ids in filtration order

  // Throws std::invalid_argument when a facet does not precede its coface or
  // the order is not a permutation of the cells.
  void validate() const;
};

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct PersistencePair {
  int dim = 0;
  double birth = 0.0;
  double death = kInfinity;
  // Critical-cell provenance. Absent for diagrams read back from CSV.
  std::optional<std::uint32_t> birth_cell;
  std::optional<std::uint32_t> death_cell;
  std::optional<std::uint32_t> birth_vertex;
  std::optional<std::uint32_t> death_vertex;

  bool essential() const { return death == kInfinity; }
  double persistence() const { return death - birth; }
};

struct PersistenceDiagram {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<PersistencePair> pairs;

  std::vector<PersistencePair> in_dimension(int dim) const;
  std::size_t essential_count(int dim) const;
};

// Number of cells of the cubical complex on an h x w vertex grid.
std::size_t cell_count(std::size_t h, std::size_t w);

FilteredComplex build_lower_star(const ScalarField& field);

// Column reduction over Z/2 with clearing: square columns are reduced first,
// every edge they pair is cleared, then the remaining edge columns are
// reduced. Zero-persistence pairs are dropped.
PersistenceDiagram compute_persistence(const FilteredComplex& complex);

// H0 only, via union-find with the elder rule.
PersistenceDiagram compute_h0_fast(const ScalarField& field);

// H0 by union-find plus H1 by reducing square columns only. Same pairs and
// provenance as compute_persistence(build_lower_star(field)) without
// materialising the complex; this is the path used during training.
PersistenceDiagram compute_diagram(const ScalarField& field);

struct PairGradient {
  double d_birth = 0.0;
  double d_death = 0.0;
};

// Routes each pair's birth (death) gradient to the argmax vertex of its birth
// (death) cell. The essential death carries no gradient. Throws when a pair
// lacks provenance or the gradient count does not match the pair count.
ScalarField pd_backward(const PersistenceDiagram& diagram, std::span<const PairGradient> grads);

// CSV with header `dim,birth,death`; an essential death is written as `inf`.
void write_diagram_csv(std::ostream& out, const PersistenceDiagram& diagram);
PersistenceDiagram read_diagram_csv(std::istream& in);

}  // namespace fedtopo::ph
