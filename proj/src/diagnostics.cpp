// SPDX-License-Identifier: Apache-2.0
#include "pgcn/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "pgcn/error.hpp"

namespace pgcn::diagnostics {

double node_smoothness(const MatrixD& h) {
  std::vector<Eigen::Index> rows;
  Eigen::VectorXd norms(h.rows());
  for (Eigen::Index i = 0; i < h.rows(); ++i) {
    norms(i) = h.row(i).norm();
    if (norms(i) > 0.0) rows.push_back(i);
  }
  if (rows.size() < 2) throw UndefinedSmoothness("node smoothness needs at least two non-zero rows");
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < rows.size(); ++a) {
    for (std::size_t b = a + 1; b < rows.size(); ++b) {
      const auto i = rows[a], j = rows[b];
      total += h.row(i).dot(h.row(j)) / (norms(i) * norms(j));
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

std::string SmoothnessCurve::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "stage,smoothness\n";
  for (const auto& [stage, v] : points) out << stage << ',' << v << '\n';
  return out.str();
}

namespace {

double safe_smoothness(const MatrixD& h) {
  try {
    return node_smoothness(h);
  } catch (const UndefinedSmoothness&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace

template <typename T>
SmoothnessCurve smoothness_curve(const model::LayerTrace<T>& tr, Scope scope, std::size_t n_electrodes) {
  SmoothnessCurve c;
  auto add = [&](const std::string& stage, const Matrix<T>& m) {
    MatrixD h = m.template cast<double>();
    if (scope == Scope::ElectrodesOnly) {
      h = h.topRows(std::min<Eigen::Index>(h.rows(), static_cast<Eigen::Index>(n_electrodes))).eval();
    }
    c.points.emplace_back(stage, safe_smoothness(h));
  };
  add("input", tr.x);
  if (tr.h1) add("local_h1", *tr.h1);
  if (tr.h2) add("local_h2", *tr.h2);
  add("local", tr.x_local);
  if (tr.x_meso) add("meso", *tr.x_meso);
  if (tr.x_enhanced) add("enhanced", *tr.x_enhanced);
  for (std::size_t l = 0; l < tr.global_layers.size(); ++l) add("global_o" + std::to_string(l + 1), tr.global_layers[l]);
  if (tr.x_global) add("global", *tr.x_global);
  return c;
}

SmoothnessCurve vanilla_smoothness_curve(const MatrixD& x, const MatrixD& laplacian, std::size_t layers,
                                         std::size_t width, std::uint64_t seed) {
  SmoothnessCurve c;
  const auto outs = model::vanilla_gcn_layers(x, laplacian, layers, width, seed);
  for (std::size_t l = 0; l < outs.size(); ++l) c.points.emplace_back("layer" + std::to_string(l + 1), safe_smoothness(outs[l]));
  return c;
}

std::string AdjacencyReport::diagonal_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "electrode,value\n";
  for (const auto& [name, v] : diagonal) out << name << ',' << v << '\n';
  return out.str();
}

std::string AdjacencyReport::connections_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "rank,from,to,weight\n";
  for (const auto& c : top) out << c.rank << ',' << c.from << ',' << c.to << ',' << c.weight << '\n';
  return out.str();
}

AdjacencyReport export_adjacency(const MatrixD& a, const geometry::Montage& montage, std::size_t k) {
  const auto n = static_cast<Eigen::Index>(montage.count());
  if (a.rows() != n || a.cols() != n) throw ShapeError("export_adjacency: matrix does not match montage");
  // A symmetric matrix lists each connection once (upper triangle).
  const bool symmetric = a == a.transpose();
  const auto off = static_cast<std::size_t>(symmetric ? n * (n - 1) / 2 : n * (n - 1));
  if (k > off) {
    throw RangeError("export_adjacency: k=" + std::to_string(k) + " exceeds " + std::to_string(off) +
                     " off-diagonal entries");
  }
  AdjacencyReport r;
  const double lo = a.diagonal().minCoeff(), hi = a.diagonal().maxCoeff();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v = hi > lo ? (a(i, i) - lo) / (hi - lo) : 0.0;
    r.diagonal.emplace_back(montage[static_cast<std::size_t>(i)].name, v);
  }
  std::vector<Eigen::Index> idx;
  idx.reserve(off);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (symmetric ? j > i : j != i) idx.push_back(i * n + j);
    }
  }
  const double* v = a.data();
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [v](Eigen::Index x, Eigen::Index y) { return v[x] > v[y] || (v[x] == v[y] && x < y); });
  for (std::size_t r_ = 0; r_ < k; ++r_) {
    const auto i = static_cast<std::size_t>(idx[r_] / n), j = static_cast<std::size_t>(idx[r_] % n);
    r.top.push_back({r_ + 1, montage[i].name, montage[j].name, v[idx[r_]]});
  }
  return r;
}

template SmoothnessCurve smoothness_curve(const model::LayerTrace<float>&, Scope, std::size_t);
template SmoothnessCurve smoothness_curve(const model::LayerTrace<double>&, Scope, std::size_t);

}  // namespace pgcn::diagnostics
