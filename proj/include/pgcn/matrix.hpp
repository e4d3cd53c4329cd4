// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

namespace pgcn {

// Dense row-major storage shared by every module. Row-major keeps a
// flattened node-feature matrix identical to its memory layout.
template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using MatrixD = Matrix<double>;
using MatrixF = Matrix<float>;

}  // namespace pgcn
