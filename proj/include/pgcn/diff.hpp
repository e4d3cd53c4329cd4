// SPDX-License-Identifier: Apache-2.0
//
// Define-by-run reverse-mode differentiation over dense matrices.
//
// A Tape records every operation of one forward pass. Values flow forward
// through Var handles; Tape::backward walks the record in reverse and
// accumulates gradients into the Parameters that were bound as leaves.
// Forward values are checked for NaN/Inf after every op.
#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "pgcn/matrix.hpp"

namespace pgcn::diff {

template <typename T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;
};

// Named parameters with fixed shapes. Copying a ParamSet deep-copies values
// and gradients, so independent copies never share state.
template <typename T>
class ParamSet {
 public:
  Parameter<T>& add(const std::string& name, Matrix<T> init);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Parameter<T>& operator[](const std::string& name);
  const Parameter<T>& operator[](const std::string& name) const;

  std::size_t size() const { return params_.size(); }
  std::size_t total_entries() const;
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& p : params_) out.add(p.name, p.value.template cast<U>());
    return out;
  }

 private:
  std::deque<Parameter<T>> params_;  // deque: stable addresses on add()
  std::unordered_map<std::string, std::size_t> index_;
};

// Records the discrete choices made by selection ops (top-k masks) so a
// later pass can replay them verbatim. Used to hold the sparsity pattern
// fixed while finite differences perturb the inputs.
class SelectionCache {
 public:
  enum class Mode { Record, Replay };

  Mode mode() const { return mode_; }
  void start_replay() {
    mode_ = Mode::Replay;
    cursor_ = 0;
  }
  void rewind() { cursor_ = 0; }

  // Stores a mask in Record mode; returns the next stored mask in Replay.
  const std::vector<std::uint8_t>& exchange(std::vector<std::uint8_t> computed);

 private:
  Mode mode_ = Mode::Record;
  std::size_t cursor_ = 0;
  std::vector<std::vector<std::uint8_t>> masks_;
};

template <typename T>
class Tape;

template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  const Matrix<T>& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Matrix<T> value);
  // Leaf bound to a parameter. Binding the same parameter twice returns
  // the same node.
  Var<T> param(Parameter<T>& p);

  // Parameter leaves alias their Parameter's value and gradient.
  const Matrix<T>& value(int id) const {
    const auto& n = nodes_[static_cast<std::size_t>(id)];
    return n.param != nullptr ? n.param->value : n.value;
  }
  // Gradient w.r.t. a node after backward(); zero-sized if unreached. For a
  // parameter leaf this is the parameter's accumulated gradient.
  const Matrix<T>& grad(int id) const {
    const auto& n = nodes_[static_cast<std::size_t>(id)];
    return n.param != nullptr ? n.param->grad : n.grad;
  }

  // Seeds d(loss)/d(loss) = 1 and propagates. Parameter gradients are
  // accumulated (added), never overwritten.
  void backward(Var<T> loss);

  std::size_t size() const { return nodes_.size(); }

  // Kink tracking: when enabled, every piecewise op folds its active
  // branch pattern into signature(). Two passes with equal signatures took
  // the same branches everywhere.
  void set_track_kinks(bool on) { track_kinks_ = on; }
  bool track_kinks() const { return track_kinks_; }
  std::uint64_t signature() const { return signature_; }
  void mix_signature(const std::uint8_t* bytes, std::size_t n);

  void set_selection_cache(SelectionCache* cache) { selections_ = cache; }
  SelectionCache* selection_cache() const { return selections_; }

  // Internal: appends a computed node.
  Var<T> push(Matrix<T> value, BackwardFn backward, const char* op);
  // Internal: gradient accumulator of a node, zero-initialised on demand.
  Matrix<T>& grad_acc(int id);

 private:
  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
  };
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, int> param_nodes_;
  bool track_kinks_ = false;
  std::uint64_t signature_ = 1469598103934665603ULL;
  SelectionCache* selections_ = nullptr;
};

// ---- primitives -----------------------------------------------------------

template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
template <typename T> Var<T> add(Var<T> a, Var<T> b);
// Adds a 1 x cols row vector to every row of m.
template <typename T> Var<T> add_row(Var<T> m, Var<T> row);
template <typename T> Var<T> scale(Var<T> a, T factor);
template <typename T> Var<T> transpose(Var<T> a);
// Elementwise product with a constant matrix.
template <typename T> Var<T> mask(Var<T> a, const Matrix<T>& m);

template <typename T> Var<T> relu(Var<T> x);
template <typename T> Var<T> leaky_relu(Var<T> x, T slope);
// Row-wise softmax with max subtraction.
template <typename T> Var<T> softmax_rows(Var<T> x);

template <typename T> Var<T> concat_cols(std::span<const Var<T>> parts);
template <typename T> Var<T> concat_rows(std::span<const Var<T>> parts);
template <typename T> Var<T> gather_rows(Var<T> a, std::span<const std::size_t> rows);
// Row-major reshape into a single row.
template <typename T> Var<T> flatten(Var<T> a);

template <typename T> Var<T> sum(Var<T> a);
// n x 1 column of row sums.
template <typename T> Var<T> row_sums(Var<T> a);
// sum_k w(0, k) * mats[k]; w is 1 x K.
template <typename T> Var<T> weighted_sum(Var<T> w, std::span<const Var<T>> mats);

// D^-1/2 (A [+ I]) D^-1/2 with D from row sums.
template <typename T> Var<T> sym_normalize(Var<T> a, bool add_self_loops);
// Keeps the top fraction of off-diagonal entries; the selection is a
// constant for backward and is recorded/replayed through the tape's
// SelectionCache when one is attached.
template <typename T> Var<T> topk_sparsify(Var<T> a, double fraction);

// Mean softmax cross-entropy of B x C logits against B labels.
template <typename T> Var<T> cross_entropy(Var<T> logits, std::span<const std::size_t> labels);

// ---- gradient checking ----------------------------------------------------

template <typename T>
using LossFn = std::function<Var<T>(Tape<T>&, ParamSet<T>&)>;

struct GradCheckOptions {
  double eps = 1e-6;
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, d)
  // with d = max(floor, relative_floor * largest |numeric| of the tensor).
  // The second term keeps rounding in tiny entries of an otherwise large
  // gradient from dominating.
  double floor = 1e-3;
  double relative_floor = 1e-2;
  // Restrict to parameters whose name starts with one of these prefixes.
  std::vector<std::string> only;
  // Upper bound on checked entries per parameter (evenly strided); 0 = all.
  std::size_t max_entries_per_param = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Entries whose +/-eps perturbation changed a kink or selection pattern.
  std::size_t skipped = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
};

// Central differences in the parameters' own precision.
template <typename T>
GradCheckResult grad_check(ParamSet<T>& params, const LossFn<T>& loss, const GradCheckOptions& opt = {});

// Analytic gradients from the 32-bit pass; central differences evaluated in
// 64-bit on a widened copy of the parameters.
GradCheckResult grad_check_mixed(ParamSet<float>& params, const LossFn<float>& loss32,
                                 const LossFn<double>& loss64, const GradCheckOptions& opt = {});

}  // namespace pgcn::diff
