// SPDX-License-Identifier: Apache-2.0
#include "pgcn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

#include "pgcn/error.hpp"

namespace pgcn::train {

Precision precision_from_string(const std::string& s) {
  if (s == "f64") return Precision::F64;
  if (s == "f32") return Precision::F32;
  throw ConfigError("unknown precision " + s + " (expected f64 or f32)");
}

std::string to_string(Precision p) { return p == Precision::F64 ? "f64" : "f32"; }

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw ConfigError("lr must be non-negative");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (epochs == 0) throw ConfigError("epochs must be at least 1");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) throw ConfigError("warmup_fraction must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must be in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"warmup_fraction", c.warmup_fraction},
          {"weight_decay", c.weight_decay},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"adam_eps", c.adam_eps},
          {"seed", c.seed},
          {"precision", to_string(c.precision)},
          {"standardize", c.standardize}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("lr", c.lr);
    get("batch_size", c.batch_size);
    get("epochs", c.epochs);
    get("warmup_fraction", c.warmup_fraction);
    get("weight_decay", c.weight_decay);
    get("beta1", c.beta1);
    get("beta2", c.beta2);
    get("adam_eps", c.adam_eps);
    get("seed", c.seed);
    get("standardize", c.standardize);
    if (j.contains("precision")) c.precision = precision_from_string(j.at("precision").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  return c;
}

double cross_entropy(const MatrixD& logits, std::size_t label) {
  if (logits.rows() != 1) throw ShapeError("cross_entropy: expects a single logits row");
  diff::Tape<double> tape;
  auto z = tape.constant(logits);
  const std::size_t labels[] = {label};
  return diff::cross_entropy<double>(z, labels).value()(0, 0);
}

double lr_at(std::size_t step, std::size_t total_steps, double warmup_fraction) {
  const double warm = warmup_fraction * static_cast<double>(total_steps);
  if (warm <= 0.0) return 1.0;
  const double s = static_cast<double>(step);
  return s < warm ? s / warm : 1.0;
}

template <typename T>
AdamState<T> adam_init(const diff::ParamSet<T>& params) {
  AdamState<T> st;
  for (const auto& p : params) {
    st.m.push_back(Matrix<T>::Zero(p.value.rows(), p.value.cols()));
    st.v.push_back(Matrix<T>::Zero(p.value.rows(), p.value.cols()));
  }
  return st;
}

template <typename T>
void adamw_step(diff::ParamSet<T>& params, AdamState<T>& st, const TrainConfig& cfg, double multiplier) {
  if (st.m.size() != params.size()) throw ShapeError("adamw_step: optimizer state does not match parameters");
  ++st.t;
  const double lr = cfg.lr * multiplier;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T step = static_cast<T>(lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(cfg.adam_eps);
  const T decay = static_cast<T>(1.0 - lr * cfg.weight_decay);
  std::size_t k = 0;
  for (auto& p : params) {
    auto& m = st.m[k];
    auto& v = st.v[k];
    ++k;
    p.value *= decay;
    m = b1 * m + (T(1) - b1) * p.grad;
    v = b2 * v + (T(1) - b2) * p.grad.cwiseAbs2();
    p.value.array() -= step * m.array() / (v.array().sqrt() * inv_sqrt_bc2 + eps);
  }
}

nlohmann::json Report::to_json() const {
  nlohmann::json folds_j = nlohmann::json::array();
  for (const auto& f : folds) {
    folds_j.push_back({{"name", f.name}, {"train_accuracy", f.train_accuracy}, {"test_accuracy", f.test_accuracy}});
  }
  nlohmann::json epochs_j = nlohmann::json::array();
  for (const auto& e : epochs) {
    epochs_j.push_back({{"fold", e.fold},
                        {"epoch", e.epoch},
                        {"train_loss", e.train_loss},
                        {"train_accuracy", e.train_accuracy},
                        {"test_accuracy", e.test_accuracy}});
  }
  return {{"mean_accuracy", mean_accuracy}, {"std_accuracy", std_accuracy}, {"folds", folds_j}, {"epochs", epochs_j}};
}

std::string Report::epochs_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "fold,epoch,train_loss,train_accuracy,test_accuracy\n";
  for (const auto& e : epochs) {
    out << e.fold << ',' << e.epoch << ',' << e.train_loss << ',' << e.train_accuracy << ',' << e.test_accuracy
        << '\n';
  }
  return out.str();
}

std::pair<double, double> mean_std(std::span<const double> values) {
  if (values.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  return {mean, std::sqrt(var / n)};
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

template <typename T>
Matrix<T> prepared(const data::Sample& s, const data::Standardizer* scaler) {
  return (scaler ? scaler->apply(s.features) : s.features).template cast<T>();
}

template <typename T>
std::size_t argmax_row(const Matrix<T>& m, Eigen::Index r) {
  Eigen::Index best = 0;
  m.row(r).maxCoeff(&best);
  return static_cast<std::size_t>(best);
}

constexpr std::size_t kEvalBatch = 128;

}  // namespace

template <typename T>
double evaluate(const model::Pgcn<T>& model, diff::ParamSet<T>& params, const data::Dataset& ds,
                std::span<const std::size_t> indices, const data::Standardizer* scaler) {
  if (indices.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < indices.size(); start += kEvalBatch) {
    const std::size_t end = std::min(indices.size(), start + kEvalBatch);
    std::vector<Matrix<T>> batch;
    for (std::size_t i = start; i < end; ++i) batch.push_back(prepared<T>(ds.samples[indices[i]], scaler));
    diff::Tape<T> tape;
    const auto logits = model.forward(tape, params, batch).value();
    for (std::size_t i = start; i < end; ++i) {
      if (argmax_row(logits, static_cast<Eigen::Index>(i - start)) == ds.samples[indices[i]].label) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

template <typename T>
FitOutput<T> fit(const model::Pgcn<T>& model, const data::Dataset& ds, std::span<const data::Split> folds,
                 const TrainConfig& cfg, const FitHooks& hooks) {
  cfg.validate();
  if (folds.empty()) throw SplitError("fit: no folds");
  if (ds.n_classes != model.config().n_classes) throw ConfigError("fit: dataset and model disagree on class count");
  FitOutput<T> out;
  std::vector<double> accuracies;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const auto& fold = folds[f];
    if (fold.train.empty() || fold.test.empty()) throw SplitError("fit: fold " + fold.name + " is empty");
    std::optional<data::Standardizer> scaler;
    if (cfg.standardize) scaler = data::Standardizer::fit(ds, fold.train);
    const data::Standardizer* sc = scaler ? &*scaler : nullptr;

    std::vector<Matrix<T>> train_x;
    train_x.reserve(fold.train.size());
    for (auto i : fold.train) train_x.push_back(prepared<T>(ds.samples[i], sc));

    auto params = model.init_params(derive_seed(cfg.seed, 2 * f));
    auto state = adam_init(params);
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 2 * f + 1));
    const std::size_t n = fold.train.size();
    const std::size_t batches = (n + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total_steps = batches * cfg.epochs;
    std::size_t step = 0;
    std::vector<std::size_t> order(n);
    double last_train_acc = 0.0, last_test_acc = 0.0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      double loss_sum = 0.0;
      std::size_t correct = 0;
      for (std::size_t b = 0; b < batches; ++b) {
        const std::size_t lo = b * cfg.batch_size, hi = std::min(n, lo + cfg.batch_size);
        std::vector<Matrix<T>> xs;
        std::vector<std::size_t> labels, ids;
        for (std::size_t k = lo; k < hi; ++k) {
          xs.push_back(train_x[order[k]]);
          ids.push_back(fold.train[order[k]]);
          labels.push_back(ds.samples[ids.back()].label);
        }
        if (hooks.on_train_batch) hooks.on_train_batch(ids);
        try {
          diff::Tape<T> tape;
          auto logits = model.forward(tape, params, xs);
          auto loss = diff::cross_entropy<T>(logits, labels);
          params.zero_grad();
          tape.backward(loss);
          const double lv = static_cast<double>(loss.value()(0, 0));
          if (!std::isfinite(lv)) throw NumericalError("loss is not finite");
          loss_sum += lv * static_cast<double>(hi - lo);
          for (std::size_t k = 0; k < labels.size(); ++k) {
            if (argmax_row(logits.value(), static_cast<Eigen::Index>(k)) == labels[k]) ++correct;
          }
        } catch (const Error& e) {
          // A learned adjacency driven to non-positive degrees is the same
          // divergence as a non-finite loss, one step earlier.
          if (!dynamic_cast<const NumericalError*>(&e) && !dynamic_cast<const IsolatedNode*>(&e)) throw;
          throw NumericalError("fold " + fold.name + " epoch " + std::to_string(epoch) + " batch " +
                               std::to_string(b) + ": " + e.name() + ": " + e.what());
        }
        ++step;
        adamw_step(params, state, cfg, lr_at(step, total_steps, cfg.warmup_fraction));
      }
      last_train_acc = static_cast<double>(correct) / static_cast<double>(n);
      last_test_acc = evaluate(model, params, ds, fold.test, sc);
      out.report.epochs.push_back({fold.name, epoch, loss_sum / static_cast<double>(n), last_train_acc, last_test_acc});
    }
    // Running accuracy lags the updates within an epoch; report the final
    // parameters' accuracy on the training split.
    last_train_acc = evaluate(model, params, ds, fold.train, sc);
    out.report.folds.push_back({fold.name, last_train_acc, last_test_acc});
    accuracies.push_back(last_test_acc);
    out.params.push_back(std::move(params));
  }
  std::tie(out.report.mean_accuracy, out.report.std_accuracy) = mean_std(accuracies);
  return out;
}

#define PGCN_INSTANTIATE(T)                                                                                \
  template AdamState<T> adam_init(const diff::ParamSet<T>&);                                               \
  template void adamw_step(diff::ParamSet<T>&, AdamState<T>&, const TrainConfig&, double);                 \
  template FitOutput<T> fit(const model::Pgcn<T>&, const data::Dataset&, std::span<const data::Split>,     \
                            const TrainConfig&, const FitHooks&);                                          \
  template double evaluate(const model::Pgcn<T>&, diff::ParamSet<T>&, const data::Dataset&,                \
                           std::span<const std::size_t>, const data::Standardizer*);

PGCN_INSTANTIATE(float)
PGCN_INSTANTIATE(double)

#undef PGCN_INSTANTIATE

}  // namespace pgcn::train
