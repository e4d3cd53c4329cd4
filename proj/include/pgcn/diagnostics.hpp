// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "pgcn/geometry.hpp"
#include "pgcn/matrix.hpp"
#include "pgcn/model.hpp"

namespace pgcn::diagnostics {

// Mean cosine similarity over unordered pairs of non-zero rows. Throws
// UndefinedSmoothness when fewer than two non-zero rows exist.
double node_smoothness(const MatrixD& h);

enum class Scope { AllNodes, ElectrodesOnly };

struct SmoothnessCurve {
  std::vector<std::pair<std::string, double>> points;

  // "stage,smoothness" rows.
  std::string to_csv() const;
};

// One point per traced stage, in forward order. ElectrodesOnly restricts
// every stage to its first n_electrodes rows. Stages whose smoothness is
// undefined (all rows zero) are reported as NaN.
template <typename T>
SmoothnessCurve smoothness_curve(const model::LayerTrace<T>& trace, Scope scope, std::size_t n_electrodes);

// Smoothness after each of `layers` stacked plain GCN layers.
SmoothnessCurve vanilla_smoothness_curve(const MatrixD& x, const MatrixD& laplacian, std::size_t layers,
                                         std::size_t width, std::uint64_t seed);

struct Connection {
  std::size_t rank = 0;  // 1-based
  std::string from, to;
  double weight = 0.0;
};

struct AdjacencyReport {
  std::vector<std::pair<std::string, double>> diagonal;  // min-max rescaled
  std::vector<Connection> top;

  std::string diagonal_csv() const;     // electrode,value
  std::string connections_csv() const;  // rank,from,to,weight
};

// Diagonal min-max rescaled to [0, 1] (constant diagonal maps to 0) and the
// k largest off-diagonal entries, ties by ascending row-major index. For an
// exactly symmetric matrix only the upper triangle is ranked.
AdjacencyReport export_adjacency(const MatrixD& a, const geometry::Montage& montage, std::size_t k);

}  // namespace pgcn::diagnostics
