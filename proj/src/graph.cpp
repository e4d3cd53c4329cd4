// SPDX-License-Identifier: Apache-2.0
#include "pgcn/graph.hpp"

namespace pgcn::graph {

MatrixD binary_adjacency(const std::vector<std::vector<std::size_t>>& neighbors, std::size_t n) {
  if (neighbors.size() > n) throw IndexError("binary_adjacency: more neighbour sets than nodes");
  const auto side = static_cast<Eigen::Index>(n);
  MatrixD a = MatrixD::Zero(side, side);
  for (std::size_t i = 0; i < neighbors.size(); ++i) {
    for (auto j : neighbors[i]) {
      if (j >= n) throw IndexError("binary_adjacency: neighbour index out of range");
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 1.0;
    }
  }
  return a;
}

MatrixD init_distance_adjacency(const MatrixD& distances, double delta) {
  if (distances.rows() != distances.cols()) throw ShapeError("distance matrix must be square");
  if (!(delta > 0.0)) throw RangeError("delta must be positive");
  const Eigen::Index n = distances.rows();
  MatrixD a(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) {
        a(i, j) = 1.0;
        continue;
      }
      const double d = distances(i, j);
      if (!(d > 0.0)) {
        throw DegenerateDistance("zero distance between nodes " + std::to_string(i) + " and " +
                                 std::to_string(j));
      }
      a(i, j) = std::clamp(delta / (d * d), 0.1, 1.0);
    }
  }
  return a;
}

}  // namespace pgcn::graph
