// SPDX-License-Identifier: Apache-2.0
#include "pgcn/diff.hpp"

#include <algorithm>
#include <cmath>

#include "pgcn/error.hpp"
#include "pgcn/graph.hpp"

namespace pgcn::diff {

// ---- ParamSet ---------------------------------------------------------------

template <typename T>
Parameter<T>& ParamSet<T>::add(const std::string& name, Matrix<T> init) {
  if (name.empty()) throw ConfigError("parameter name must not be empty");
  if (contains(name)) throw ConfigError("duplicate parameter " + name);
  index_.emplace(name, params_.size());
  Matrix<T> grad = Matrix<T>::Zero(init.rows(), init.cols());
  params_.push_back(Parameter<T>{name, std::move(init), std::move(grad)});
  return params_.back();
}

template <typename T>
Parameter<T>& ParamSet<T>::operator[](const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter " + name);
  return params_[it->second];
}

template <typename T>
const Parameter<T>& ParamSet<T>::operator[](const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter " + name);
  return params_[it->second];
}

template <typename T>
std::size_t ParamSet<T>::total_entries() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

template <typename T>
void ParamSet<T>::zero_grad() {
  for (auto& p : params_) p.grad.setZero(p.value.rows(), p.value.cols());
}

// ---- SelectionCache ---------------------------------------------------------

const std::vector<std::uint8_t>& SelectionCache::exchange(std::vector<std::uint8_t> computed) {
  if (mode_ == Mode::Record) {
    masks_.push_back(std::move(computed));
    return masks_.back();
  }
  if (cursor_ >= masks_.size()) throw ShapeError("selection replay: more selections than recorded");
  const auto& m = masks_[cursor_++];
  if (m.size() != computed.size()) throw ShapeError("selection replay: mask shape changed");
  return m;
}

// ---- Tape -------------------------------------------------------------------

template <typename T>
const Matrix<T>& Var<T>::value() const {
  return tape->value(id);
}

template <typename T>
Var<T> Tape<T>::constant(Matrix<T> value) {
  return push(std::move(value), nullptr, "constant");
}

template <typename T>
Var<T> Tape<T>::param(Parameter<T>& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return {this, it->second};
  if (!p.value.allFinite()) throw NumericalError("non-finite value in parameter " + p.name);
  nodes_.push_back(Node{Matrix<T>(), Matrix<T>(), nullptr, &p});
  const int id = static_cast<int>(nodes_.size() - 1);
  param_nodes_.emplace(&p, id);
  return {this, id};
}

template <typename T>
Var<T> Tape<T>::push(Matrix<T> value, BackwardFn backward, const char* op) {
  if (!value.allFinite()) throw NumericalError(std::string("non-finite value produced by ") + op);
  nodes_.push_back(Node{std::move(value), Matrix<T>(), std::move(backward), nullptr});
  return {this, static_cast<int>(nodes_.size() - 1)};
}

template <typename T>
Matrix<T>& Tape<T>::grad_acc(int id) {
  auto& n = nodes_[static_cast<std::size_t>(id)];
  if (n.param != nullptr) {
    auto& pg = n.param->grad;
    if (pg.rows() != n.param->value.rows() || pg.cols() != n.param->value.cols()) {
      pg.setZero(n.param->value.rows(), n.param->value.cols());
    }
    return pg;
  }
  if (n.grad.size() == 0) n.grad.setZero(n.value.rows(), n.value.cols());
  return n.grad;
}

template <typename T>
void Tape<T>::mix_signature(const std::uint8_t* bytes, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    signature_ ^= bytes[i];
    signature_ *= 1099511628211ULL;
  }
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  if (loss.tape != this) throw ShapeError("backward: loss belongs to another tape");
  const auto& lv = value(loss.id);
  if (lv.rows() != 1 || lv.cols() != 1) throw ShapeError("backward: loss must be a 1x1 scalar");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  grad_acc(loss.id).setOnes();
  for (int id = loss.id; id >= 0; --id) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    if (n.param != nullptr || n.grad.size() == 0) continue;
    if (!n.grad.allFinite()) {
      throw NumericalError(std::string("non-finite gradient at node ") + std::to_string(id));
    }
    if (n.backward) n.backward(*this, id);
  }
  for (const auto& [p, id] : param_nodes_) {
    if (!p->grad.allFinite()) throw NumericalError("non-finite gradient for parameter " + p->name);
  }
}

// ---- primitives -------------------------------------------------------------

namespace {

template <typename T>
void same_tape(Var<T> a, Var<T> b, const char* op) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw ShapeError(std::string(op) + ": operands recorded on different tapes");
  }
}

template <typename T>
void track_branches(Tape<T>& t, const Matrix<T>& x) {
  if (!t.track_kinks()) return;
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(x.size()));
  for (Eigen::Index i = 0; i < x.size(); ++i) bits[static_cast<std::size_t>(i)] = x.data()[i] > T(0);
  t.mix_signature(bits.data(), bits.size());
}

}  // namespace

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  same_tape(a, b, "matmul");
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                     std::to_string(b.rows()) + " differ");
  }
  Matrix<T> v = a.value() * b.value();
  const int ia = a.id, ib = b.id;
  return a.tape->push(std::move(v), [ia, ib](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    t.grad_acc(ia).noalias() += g * t.value(ib).transpose();
    t.grad_acc(ib).noalias() += t.value(ia).transpose() * g;
  }, "matmul");
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  same_tape(a, b, "add");
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("add: shape mismatch");
  Matrix<T> v = a.value() + b.value();
  const int ia = a.id, ib = b.id;
  return a.tape->push(std::move(v), [ia, ib](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    t.grad_acc(ia) += g;
    t.grad_acc(ib) += g;
  }, "add");
}

template <typename T>
Var<T> add_row(Var<T> m, Var<T> row) {
  same_tape(m, row, "add_row");
  if (row.rows() != 1 || row.cols() != m.cols()) throw ShapeError("add_row: row shape mismatch");
  Matrix<T> v = m.value().rowwise() + row.value().row(0);
  const int im = m.id, ir = row.id;
  return m.tape->push(std::move(v), [im, ir](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    t.grad_acc(im) += g;
    t.grad_acc(ir) += g.colwise().sum();
  }, "add_row");
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  Matrix<T> v = a.value() * factor;
  const int ia = a.id;
  return a.tape->push(std::move(v), [ia, factor](Tape<T>& t, int self) {
    t.grad_acc(ia) += t.grad(self) * factor;
  }, "scale");
}

template <typename T>
Var<T> transpose(Var<T> a) {
  Matrix<T> v = a.value().transpose();
  const int ia = a.id;
  return a.tape->push(std::move(v), [ia](Tape<T>& t, int self) {
    t.grad_acc(ia) += t.grad(self).transpose();
  }, "transpose");
}

template <typename T>
Var<T> mask(Var<T> a, const Matrix<T>& m) {
  if (a.rows() != m.rows() || a.cols() != m.cols()) throw ShapeError("mask: shape mismatch");
  Matrix<T> v = a.value().cwiseProduct(m);
  const int ia = a.id;
  return a.tape->push(std::move(v), [ia, m](Tape<T>& t, int self) {
    t.grad_acc(ia) += t.grad(self).cwiseProduct(m);
  }, "mask");
}

template <typename T>
Var<T> relu(Var<T> x) {
  track_branches(*x.tape, x.value());
  Matrix<T> v = x.value().cwiseMax(T(0));
  const int ix = x.id;
  return x.tape->push(std::move(v), [ix](Tape<T>& t, int self) {
    const auto& in = t.value(ix);
    t.grad_acc(ix) += (in.array() > T(0)).select(t.grad(self), T(0)).matrix();
  }, "relu");
}

template <typename T>
Var<T> leaky_relu(Var<T> x, T slope) {
  track_branches(*x.tape, x.value());
  Matrix<T> v = (x.value().array() > T(0)).select(x.value(), x.value() * slope).matrix();
  const int ix = x.id;
  return x.tape->push(std::move(v), [ix, slope](Tape<T>& t, int self) {
    const auto& in = t.value(ix);
    const auto& g = t.grad(self);
    t.grad_acc(ix) += (in.array() > T(0)).select(g, g * slope).matrix();
  }, "leaky_relu");
}

template <typename T>
Var<T> softmax_rows(Var<T> x) {
  const auto& in = x.value();
  Matrix<T> y(in.rows(), in.cols());
  for (Eigen::Index i = 0; i < in.rows(); ++i) {
    const T mx = in.row(i).maxCoeff();
    y.row(i) = (in.row(i).array() - mx).exp().matrix();
    y.row(i) /= y.row(i).sum();
  }
  const int ix = x.id;
  return x.tape->push(std::move(y), [ix](Tape<T>& t, int self) {
    const auto& y = t.value(self);
    const auto& g = t.grad(self);
    Matrix<T> gy = g.cwiseProduct(y);
    const auto dots = gy.rowwise().sum();
    t.grad_acc(ix) += gy - (y.array().colwise() * dots.array()).matrix();
  }, "softmax_rows");
}

template <typename T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  const Eigen::Index r = parts[0].rows();
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    same_tape(parts[0], p, "concat_cols");
    if (p.rows() != r) throw ShapeError("concat_cols: row counts differ");
    c += p.cols();
  }
  Matrix<T> v(r, c);
  std::vector<std::pair<int, Eigen::Index>> layout;  // (id, first column)
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    v.middleCols(off, p.cols()) = p.value();
    layout.emplace_back(p.id, off);
    off += p.cols();
  }
  return parts[0].tape->push(std::move(v), [layout](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    for (const auto& [id, first] : layout) {
      t.grad_acc(id) += g.middleCols(first, t.value(id).cols());
    }
  }, "concat_cols");
}

template <typename T>
Var<T> concat_rows(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no parts");
  const Eigen::Index c = parts[0].cols();
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    same_tape(parts[0], p, "concat_rows");
    if (p.cols() != c) throw ShapeError("concat_rows: column counts differ");
    r += p.rows();
  }
  Matrix<T> v(r, c);
  std::vector<std::pair<int, Eigen::Index>> layout;
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    v.middleRows(off, p.rows()) = p.value();
    layout.emplace_back(p.id, off);
    off += p.rows();
  }
  return parts[0].tape->push(std::move(v), [layout](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    for (const auto& [id, first] : layout) {
      t.grad_acc(id) += g.middleRows(first, t.value(id).rows());
    }
  }, "concat_rows");
}

template <typename T>
Var<T> gather_rows(Var<T> a, std::span<const std::size_t> rows) {
  const auto& in = a.value();
  Matrix<T> v(static_cast<Eigen::Index>(rows.size()), in.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= static_cast<std::size_t>(in.rows())) throw IndexError("gather_rows: row out of range");
    v.row(static_cast<Eigen::Index>(r)) = in.row(static_cast<Eigen::Index>(rows[r]));
  }
  const int ia = a.id;
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return a.tape->push(std::move(v), [ia, idx](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad_acc(ia);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      ga.row(static_cast<Eigen::Index>(idx[r])) += g.row(static_cast<Eigen::Index>(r));
    }
  }, "gather_rows");
}

template <typename T>
Var<T> flatten(Var<T> a) {
  const auto& in = a.value();
  Matrix<T> v = Eigen::Map<const Matrix<T>>(in.data(), 1, in.size());
  const int ia = a.id;
  return a.tape->push(std::move(v), [ia](Tape<T>& t, int self) {
    auto& ga = t.grad_acc(ia);
    ga += Eigen::Map<const Matrix<T>>(t.grad(self).data(), ga.rows(), ga.cols());
  }, "flatten");
}

template <typename T>
Var<T> sum(Var<T> a) {
  Matrix<T> v(1, 1);
  v(0, 0) = a.value().sum();
  const int ia = a.id;
  return a.tape->push(std::move(v), [ia](Tape<T>& t, int self) {
    t.grad_acc(ia).array() += t.grad(self)(0, 0);
  }, "sum");
}

template <typename T>
Var<T> row_sums(Var<T> a) {
  Matrix<T> v = a.value().rowwise().sum();
  const int ia = a.id;
  return a.tape->push(std::move(v), [ia](Tape<T>& t, int self) {
    auto& ga = t.grad_acc(ia);
    ga.colwise() += t.grad(self).col(0);
  }, "row_sums");
}

template <typename T>
Var<T> weighted_sum(Var<T> w, std::span<const Var<T>> mats) {
  if (mats.empty()) throw ShapeError("weighted_sum: no matrices");
  if (w.rows() != 1 || w.cols() != static_cast<Eigen::Index>(mats.size())) {
    throw ShapeError("weighted_sum: weight vector must be 1 x K");
  }
  Matrix<T> v = Matrix<T>::Zero(mats[0].rows(), mats[0].cols());
  std::vector<int> ids;
  for (std::size_t k = 0; k < mats.size(); ++k) {
    same_tape(w, mats[k], "weighted_sum");
    if (mats[k].rows() != v.rows() || mats[k].cols() != v.cols()) {
      throw ShapeError("weighted_sum: matrices differ in shape");
    }
    v += w.value()(0, static_cast<Eigen::Index>(k)) * mats[k].value();
    ids.push_back(mats[k].id);
  }
  const int iw = w.id;
  return w.tape->push(std::move(v), [iw, ids](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      t.grad_acc(iw)(0, kk) += g.cwiseProduct(t.value(ids[k])).sum();
      t.grad_acc(ids[k]) += t.value(iw)(0, kk) * g;
    }
  }, "weighted_sum");
}

template <typename T>
Var<T> sym_normalize(Var<T> a, bool add_self_loops) {
  Matrix<T> l = graph::sym_normalize<T>(a.value(), add_self_loops);
  Matrix<T> at = a.value();
  if (add_self_loops) at.diagonal().array() += T(1);
  Eigen::Matrix<T, Eigen::Dynamic, 1> s = at.rowwise().sum().array().rsqrt();
  const int ia = a.id;
  return a.tape->push(std::move(l), [ia, s](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& l = t.value(self);
    Matrix<T> gl = g.cwiseProduct(l);
    // d loss / d degree_i
    Eigen::Matrix<T, Eigen::Dynamic, 1> gd =
        (gl.rowwise().sum() + gl.colwise().sum().transpose()).cwiseProduct(s.cwiseAbs2()) * T(-0.5);
    auto& ga = t.grad_acc(ia);
    ga += s.asDiagonal() * g * s.asDiagonal();
    ga.colwise() += gd;
  }, "sym_normalize");
}

template <typename T>
Var<T> topk_sparsify(Var<T> a, double fraction) {
  const Matrix<T> computed = graph::topk_mask<T>(a.value(), fraction);
  Matrix<T> m = computed;
  auto& tape = *a.tape;
  if (auto* cache = tape.selection_cache()) {
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(computed.size()));
    for (Eigen::Index i = 0; i < computed.size(); ++i) {
      bits[static_cast<std::size_t>(i)] = computed.data()[i] != T(0);
    }
    const auto& used = cache->exchange(std::move(bits));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = used[static_cast<std::size_t>(i)] ? T(1) : T(0);
  }
  if (tape.track_kinks()) {
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.size(); ++i) bits[static_cast<std::size_t>(i)] = m.data()[i] != T(0);
    tape.mix_signature(bits.data(), bits.size());
  }
  return mask(a, m);
}

template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const std::size_t> labels) {
  const auto& z = logits.value();
  if (static_cast<std::size_t>(z.rows()) != labels.size()) {
    throw ShapeError("cross_entropy: one label per logits row required");
  }
  if (labels.empty()) throw ShapeError("cross_entropy: empty batch");
  Matrix<T> p(z.rows(), z.cols());
  T loss = 0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const auto y = labels[static_cast<std::size_t>(i)];
    if (y >= static_cast<std::size_t>(z.cols())) {
      throw LabelError("cross_entropy: label " + std::to_string(y) + " out of range");
    }
    const T mx = z.row(i).maxCoeff();
    const T lse = mx + std::log((z.row(i).array() - mx).exp().sum());
    p.row(i) = (z.row(i).array() - lse).exp().matrix();
    loss += lse - z(i, static_cast<Eigen::Index>(y));
  }
  const T inv_b = T(1) / static_cast<T>(z.rows());
  Matrix<T> v(1, 1);
  v(0, 0) = loss * inv_b;
  std::vector<std::size_t> ys(labels.begin(), labels.end());
  const int il = logits.id;
  return logits.tape->push(std::move(v), [il, p, ys, inv_b](Tape<T>& t, int self) {
    Matrix<T> d = p;
    for (std::size_t i = 0; i < ys.size(); ++i) {
      d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(ys[i])) -= T(1);
    }
    t.grad_acc(il) += d * (t.grad(self)(0, 0) * inv_b);
  }, "cross_entropy");
}

// ---- gradient checking ------------------------------------------------------

namespace {

struct Probe {
  double loss;
  std::uint64_t signature;
};

template <typename T>
Probe probe(ParamSet<T>& params, const LossFn<T>& f, SelectionCache& cache) {
  cache.rewind();
  Tape<T> tape;
  tape.set_track_kinks(true);
  tape.set_selection_cache(&cache);
  Var<T> loss = f(tape, params);
  if (loss.rows() != 1 || loss.cols() != 1) throw ShapeError("grad_check: loss must be 1x1");
  return {static_cast<double>(loss.value()(0, 0)), tape.signature()};
}

bool selected(const std::string& name, const std::vector<std::string>& only) {
  if (only.empty()) return true;
  return std::any_of(only.begin(), only.end(),
                     [&](const std::string& p) { return name.rfind(p, 0) == 0; });
}

// Analytic gradients (copied out) plus the signature and selection record
// of the reference pass.
template <typename T>
std::vector<Matrix<double>> analytic(ParamSet<T>& params, const LossFn<T>& f, SelectionCache& cache) {
  Tape<T> tape;
  tape.set_selection_cache(&cache);
  Var<T> loss = f(tape, params);
  params.zero_grad();
  tape.backward(loss);
  std::vector<Matrix<double>> out;
  for (const auto& p : params) out.push_back(p.grad.template cast<double>());
  return out;
}

template <typename U>
GradCheckResult compare(ParamSet<U>& oracle_params, const LossFn<U>& f,
                        const std::vector<Matrix<double>>& grads, SelectionCache& cache,
                        const GradCheckOptions& opt) {
  GradCheckResult res;
  const std::uint64_t base = probe(oracle_params, f, cache).signature;
  std::size_t k = 0;
  for (auto& p : oracle_params) {
    const auto& g = grads[k++];
    if (!selected(p.name, opt.only)) continue;
    const auto n = static_cast<std::size_t>(p.value.size());
    std::size_t stride = 1;
    if (opt.max_entries_per_param > 0 && n > opt.max_entries_per_param) {
      stride = (n + opt.max_entries_per_param - 1) / opt.max_entries_per_param;
    }
    std::vector<std::pair<std::size_t, double>> numeric;  // (entry, estimate)
    double scale = 0.0;
    for (std::size_t i = 0; i < n; i += stride) {
      U& slot = p.value.data()[i];
      const U orig = slot;
      slot = orig + static_cast<U>(opt.eps);
      const Probe plus = probe(oracle_params, f, cache);
      slot = orig - static_cast<U>(opt.eps);
      const Probe minus = probe(oracle_params, f, cache);
      slot = orig;
      if (plus.signature != base || minus.signature != base) {
        ++res.skipped;
        continue;
      }
      const double d = (plus.loss - minus.loss) / (2.0 * opt.eps);
      numeric.emplace_back(i, d);
      scale = std::max(scale, std::abs(d));
    }
    const double floor = std::max(opt.floor, opt.relative_floor * scale);
    for (const auto& [i, num] : numeric) {
      const double a = g.data()[i];
      const double rel = std::abs(a - num) / std::max({std::abs(a), std::abs(num), floor});
      ++res.checked;
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst_param = p.name;
        res.worst_index = i;
      }
    }
  }
  return res;
}

}  // namespace

template <typename T>
GradCheckResult grad_check(ParamSet<T>& params, const LossFn<T>& loss, const GradCheckOptions& opt) {
  SelectionCache cache;
  const auto grads = analytic(params, loss, cache);
  cache.start_replay();
  return compare(params, loss, grads, cache, opt);
}

GradCheckResult grad_check_mixed(ParamSet<float>& params, const LossFn<float>& loss32,
                                 const LossFn<double>& loss64, const GradCheckOptions& opt) {
  SelectionCache cache;
  const auto grads = analytic(params, loss32, cache);
  cache.start_replay();
  ParamSet<double> wide = params.cast<double>();
  return compare(wide, loss64, grads, cache, opt);
}

// ---- instantiation ----------------------------------------------------------

#define PGCN_INSTANTIATE(T)                                                            \
  template class ParamSet<T>;                                                          \
  template struct Var<T>;                                                              \
  template class Tape<T>;                                                              \
  template Var<T> matmul(Var<T>, Var<T>);                                              \
  template Var<T> add(Var<T>, Var<T>);                                                 \
  template Var<T> add_row(Var<T>, Var<T>);                                             \
  template Var<T> scale(Var<T>, T);                                                    \
  template Var<T> transpose(Var<T>);                                                   \
  template Var<T> mask(Var<T>, const Matrix<T>&);                                      \
  template Var<T> relu(Var<T>);                                                        \
  template Var<T> leaky_relu(Var<T>, T);                                               \
  template Var<T> softmax_rows(Var<T>);                                                \
  template Var<T> concat_cols(std::span<const Var<T>>);                                \
  template Var<T> concat_rows(std::span<const Var<T>>);                                \
  template Var<T> gather_rows(Var<T>, std::span<const std::size_t>);                   \
  template Var<T> flatten(Var<T>);                                                     \
  template Var<T> sum(Var<T>);                                                         \
  template Var<T> row_sums(Var<T>);                                                    \
  template Var<T> weighted_sum(Var<T>, std::span<const Var<T>>);                       \
  template Var<T> sym_normalize(Var<T>, bool);                                         \
  template Var<T> topk_sparsify(Var<T>, double);                                       \
  template Var<T> cross_entropy(Var<T>, std::span<const std::size_t>);                 \
  template GradCheckResult grad_check(ParamSet<T>&, const LossFn<T>&, const GradCheckOptions&);

PGCN_INSTANTIATE(float)
PGCN_INSTANTIATE(double)

#undef PGCN_INSTANTIATE

}  // namespace pgcn::diff
