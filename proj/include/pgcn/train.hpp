// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pgcn/data.hpp"
#include "pgcn/diff.hpp"
#include "pgcn/model.hpp"

namespace pgcn::train {

enum class Precision { F64, F32 };

Precision precision_from_string(const std::string& s);
std::string to_string(Precision p);

struct TrainConfig {
  double lr = 1e-2;
  std::size_t batch_size = 64;
  std::size_t epochs = 50;
  double warmup_fraction = 0.05;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  Precision precision = Precision::F64;
  // Per-entry z-score with statistics from each fold's training samples.
  bool standardize = false;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

// Mean cross-entropy of a single logits row; thin wrapper over the tape op.
double cross_entropy(const MatrixD& logits, std::size_t label);

// Learning-rate multiplier: linear 0 -> 1 over the first
// warmup_fraction * total_steps steps, then 1.
double lr_at(std::size_t step, std::size_t total_steps, double warmup_fraction);

template <typename T>
struct AdamState {
  std::vector<Matrix<T>> m, v;
  std::size_t t = 0;  // completed updates
};

template <typename T>
AdamState<T> adam_init(const diff::ParamSet<T>& params);

// One decoupled-weight-decay Adam update using the gradients stored in
// `params`, with learning rate cfg.lr * multiplier.
template <typename T>
void adamw_step(diff::ParamSet<T>& params, AdamState<T>& state, const TrainConfig& cfg, double multiplier);

struct EpochRecord {
  std::string fold;
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

struct FoldResult {
  std::string name;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

struct Report {
  std::vector<EpochRecord> epochs;
  std::vector<FoldResult> folds;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // population std over folds

  nlohmann::json to_json() const;
  // epoch rows: fold,epoch,train_loss,train_accuracy,test_accuracy
  std::string epochs_csv() const;
};

// Mean and population standard deviation.
std::pair<double, double> mean_std(std::span<const double> values);

struct FitHooks {
  // Called with the dataset indices of every training mini-batch.
  std::function<void(std::span<const std::size_t>)> on_train_batch;
};

template <typename T>
struct FitOutput {
  Report report;
  std::vector<diff::ParamSet<T>> params;  // final parameters per fold
};

// Trains one fresh model instance per fold and evaluates its test split
// after every epoch. The reported accuracy is the final epoch's.
template <typename T>
FitOutput<T> fit(const model::Pgcn<T>& model, const data::Dataset& ds, std::span<const data::Split> folds,
                 const TrainConfig& cfg, const FitHooks& hooks = {});

// Accuracy of `params` on the given sample indices.
template <typename T>
double evaluate(const model::Pgcn<T>& model, diff::ParamSet<T>& params, const data::Dataset& ds,
                std::span<const std::size_t> indices, const data::Standardizer* scaler = nullptr);

// Deterministic seed derivation (splitmix64).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace pgcn::train
