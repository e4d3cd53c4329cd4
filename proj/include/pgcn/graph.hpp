// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "pgcn/error.hpp"
#include "pgcn/matrix.hpp"

namespace pgcn::graph {

// a[i][j] = 1 iff j is listed in neighbors[i].
MatrixD binary_adjacency(const std::vector<std::vector<std::size_t>>& neighbors, std::size_t n);

// Inverse-square distance weights clipped to [0.1, 1]; the diagonal is 1.
MatrixD init_distance_adjacency(const MatrixD& distances, double delta);

// Symmetric normalisation D^-1/2 (A [+ I]) D^-1/2 with D the row sums of
// the (optionally self-looped) matrix.
template <typename T>
Matrix<T> sym_normalize(const Matrix<T>& a, bool add_self_loops) {
  if (a.rows() != a.cols()) throw ShapeError("sym_normalize: adjacency must be square");
  Matrix<T> at = a;
  if (add_self_loops) at.diagonal().array() += T(1);
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv_sqrt(at.rows());
  for (Eigen::Index i = 0; i < at.rows(); ++i) {
    const T deg = at.row(i).sum();
    if (!(deg > T(0))) {
      throw IsolatedNode("sym_normalize: node " + std::to_string(i) + " has non-positive degree");
    }
    inv_sqrt(i) = T(1) / std::sqrt(deg);
  }
  return inv_sqrt.asDiagonal() * at * inv_sqrt.asDiagonal();
}

// Mask (1 kept, 0 dropped) of the k = floor(fraction * n(n-1)) largest
// off-diagonal entries, ties broken by ascending row-major index. The
// diagonal is always kept.
template <typename T>
Matrix<T> topk_mask(const Matrix<T>& a, double fraction) {
  if (a.rows() != a.cols()) throw ShapeError("topk: adjacency must be square");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw RangeError("topk: fraction must be in (0, 1]");
  const Eigen::Index n = a.rows();
  const auto off = static_cast<std::size_t>(n * (n - 1));
  const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(off)));
  std::vector<Eigen::Index> idx;
  idx.reserve(off);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i != j) idx.push_back(i * n + j);
    }
  }
  const T* v = a.data();
  auto before = [v](Eigen::Index x, Eigen::Index y) {
    return v[x] > v[y] || (v[x] == v[y] && x < y);
  };
  if (k < idx.size()) {
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), before);
  }
  Matrix<T> mask = Matrix<T>::Identity(n, n);
  for (std::size_t r = 0; r < k; ++r) mask.data()[idx[r]] = T(1);
  return mask;
}

template <typename T>
Matrix<T> topk_sparsify(const Matrix<T>& a, double fraction) {
  return a.cwiseProduct(topk_mask(a, fraction));
}

}  // namespace pgcn::graph
