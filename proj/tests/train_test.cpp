// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "pgcn/data.hpp"
#include "pgcn/error.hpp"
#include "pgcn/model.hpp"
#include "pgcn/train.hpp"
#include "support/helpers.hpp"

namespace pgcn::train {
namespace {

using testing::shipped_montage;
using testing::shipped_partitions;

model::PgcnConfig compact_config() {
  model::PgcnConfig c;
  c.hidden1 = 64;
  c.hidden2 = 16;
  return c;
}

model::Pgcn<double> compact_model() { return {compact_config(), shipped_montage(), shipped_partitions()}; }

data::Dataset separable_local(std::size_t subjects = 1) {
  auto spec = data::default_synth_spec(shipped_montage(), data::SynthMode::Local);
  spec.noise_sd = 0.0;
  spec.n_subjects = subjects;
  spec.n_trials = 9;
  spec.samples_per_trial = 4;
  return data::synth_generate(spec, 3);
}

data::Split six_three(const data::Dataset& ds) {
  return data::split_subject_dependent(ds, data::parse_trial_set("1-6"), data::parse_trial_set("7-9"));
}

// ---- loss ----------------------------------------------------------------------

TEST(Loss, UniformLogitsGiveLogC) {
  for (int c : {2, 3, 4, 5}) {
    EXPECT_NEAR(cross_entropy(MatrixD::Constant(1, c, 0.4), 1), std::log(static_cast<double>(c)), 1e-14);
  }
  EXPECT_NEAR(cross_entropy(MatrixD::Zero(1, 3), 0), 1.0986122886681098, 1e-15);
}

TEST(Loss, SaturatedTrueClassGivesZero) {
  MatrixD z(1, 3);
  z << -50, 80, -20;
  EXPECT_LT(cross_entropy(z, 1), 1e-30);
  EXPECT_GT(cross_entropy(z, 0), 100.0);
  EXPECT_THROW(cross_entropy(z, 3), LabelError);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    diff::ParamSet<double> ps;
    ps.add("z", testing::gaussian(rng, 1, 4, 3.0));
    const std::size_t label = rng() % 4;
    diff::LossFn<double> f = [label](diff::Tape<double>& t, diff::ParamSet<double>& p) {
      const std::size_t y[] = {label};
      return diff::cross_entropy<double>(t.param(p["z"]), y);
    };
    // Rounding in the loss dominates at small steps; the smooth loss lets a
    // wide step keep the truncation term far below the tolerance.
    diff::GradCheckOptions opt;
    opt.eps = 1e-4;
    EXPECT_LE(diff::grad_check(ps, f, opt).max_rel_error, 1e-8);
  }
}

// ---- schedule and optimiser --------------------------------------------------------

TEST(Schedule, LinearWarmupThenConstant) {
  EXPECT_EQ(lr_at(0, 100, 0.1), 0.0);
  EXPECT_EQ(lr_at(5, 100, 0.1), 0.5);
  EXPECT_EQ(lr_at(10, 100, 0.1), 1.0);
  EXPECT_EQ(lr_at(100, 100, 0.1), 1.0);
  EXPECT_EQ(lr_at(0, 100, 0.0), 1.0);
  for (std::size_t s = 1; s <= 20; ++s) EXPECT_LE(lr_at(s - 1, 200, 0.1), lr_at(s, 200, 0.1));
}

// Scalar AdamW written out step by step.
struct ScalarAdam {
  double m = 0, v = 0, p;
  int t = 0;
  explicit ScalarAdam(double p0) : p(p0) {}
  void step(double g, double lr, double decay) {
    ++t;
    p = p - lr * decay * p;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mhat = m / (1 - std::pow(0.9, t));
    const double vhat = v / (1 - std::pow(0.999, t));
    p = p - lr * mhat / (std::sqrt(vhat) + 1e-8);
  }
};

TEST(AdamW, FirstStepFromZeroState) {
  diff::ParamSet<double> ps;
  auto& p = ps.add("p", MatrixD::Zero(1, 1));
  p.grad(0, 0) = 1.0;
  auto st = adam_init(ps);
  TrainConfig cfg;
  cfg.lr = 0.01;
  cfg.weight_decay = 0.0;
  adamw_step(ps, st, cfg, 1.0);
  EXPECT_NEAR(p.value(0, 0), -0.01 / (1.0 + 1e-8), 1e-15);
  EXPECT_EQ(st.t, 1u);
}

TEST(AdamW, ZeroGradientAndDecayIsFixedPoint) {
  std::mt19937_64 rng(2);
  diff::ParamSet<double> ps;
  const MatrixD init = testing::uniform(rng, 3, 4);
  auto& p = ps.add("p", init);
  auto st = adam_init(ps);
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  for (int k = 0; k < 5; ++k) adamw_step(ps, st, cfg, 1.0);
  EXPECT_EQ(p.value, init);
}

TEST(AdamW, DecayOnlyShrinksGeometrically) {
  diff::ParamSet<double> ps;
  auto& p = ps.add("p", MatrixD::Constant(2, 2, 3.0));
  auto st = adam_init(ps);
  TrainConfig cfg;
  cfg.lr = 0.01;
  cfg.weight_decay = 0.01;
  adamw_step(ps, st, cfg, 0.5);
  EXPECT_NEAR(p.value(0, 0), 3.0 * (1.0 - 0.01 * 0.01 * 0.5), 1e-15);
}

TEST(AdamW, MatchesScalarReferenceOverManySteps) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  diff::ParamSet<double> ps;
  const MatrixD init = testing::uniform(rng, 2, 3);
  auto& p = ps.add("p", init);
  std::vector<ScalarAdam> ref;
  for (Eigen::Index i = 0; i < init.size(); ++i) ref.emplace_back(init.data()[i]);
  auto st = adam_init(ps);
  TrainConfig cfg;
  cfg.lr = 0.05;
  cfg.weight_decay = 0.02;
  for (int k = 1; k <= 30; ++k) {
    const double mult = lr_at(static_cast<std::size_t>(k), 30, 0.2);
    for (Eigen::Index i = 0; i < init.size(); ++i) {
      p.grad.data()[i] = g(rng);
      ref[static_cast<std::size_t>(i)].step(p.grad.data()[i], cfg.lr * mult, cfg.weight_decay);
    }
    adamw_step(ps, st, cfg, mult);
  }
  for (Eigen::Index i = 0; i < init.size(); ++i) {
    EXPECT_NEAR(p.value.data()[i], ref[static_cast<std::size_t>(i)].p, 1e-13);
  }
}

TEST(AdamW, StateMismatchThrows) {
  diff::ParamSet<double> a, b;
  a.add("p", MatrixD::Zero(1, 1));
  auto st = adam_init(b);
  EXPECT_THROW(adamw_step(a, st, TrainConfig{}, 1.0), ShapeError);
}

// ---- config and report ------------------------------------------------------------

TEST(Config, ValidationAndJson) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.lr, 1e-2);
  EXPECT_EQ(c.batch_size, 64u);
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.warmup_fraction = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.lr = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.seed = 99;
  c.precision = Precision::F32;
  c.standardize = true;
  EXPECT_EQ(to_json(train_config_from_json(to_json(c))), to_json(c));
  EXPECT_THROW(precision_from_string("f16"), ConfigError);
}

TEST(Report, MeanAndPopulationStd) {
  const double v[] = {0.5, 0.75, 1.0};
  const auto [m, s] = mean_std(v);
  EXPECT_DOUBLE_EQ(m, 0.75);
  EXPECT_DOUBLE_EQ(s, std::sqrt((0.0625 + 0.0 + 0.0625) / 3.0));
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_EQ(derive_seed(7, 3), derive_seed(7, 3));
}

// ---- training loop -------------------------------------------------------------------

TEST(Fit, SeparableLocalTaskReachesFullTrainAccuracy) {
  const auto m = compact_model();
  const auto ds = separable_local();
  const data::Split folds[] = {six_three(ds)};
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 8;
  const auto out = fit(m, ds, folds, cfg);
  ASSERT_EQ(out.report.folds.size(), 1u);
  EXPECT_EQ(out.report.folds[0].train_accuracy, 1.0);
  EXPECT_EQ(out.report.epochs.size(), 20u);
  for (const auto& e : out.report.epochs) {
    EXPECT_GE(e.train_accuracy, 0.0);
    EXPECT_LE(e.test_accuracy, 1.0);
  }
}

TEST(Fit, FixedSeedGivesIdenticalReports) {
  const auto m = compact_model();
  const auto ds = separable_local();
  const data::Split folds[] = {six_three(ds)};
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.seed = 5;
  const auto a = fit(m, ds, folds, cfg);
  const auto b = fit(m, ds, folds, cfg);
  EXPECT_EQ(a.report.to_json().dump(), b.report.to_json().dump());
  EXPECT_EQ(a.params[0]["classifier.W1"].value, b.params[0]["classifier.W1"].value);
  cfg.seed = 6;
  EXPECT_NE(fit(m, ds, folds, cfg).params[0]["classifier.W1"].value, a.params[0]["classifier.W1"].value);
}

TEST(Fit, LosoStdIsPopulationStdOfFolds) {
  const auto m = compact_model();
  const auto ds = separable_local(3);
  data::ProtocolSpec p;
  p.protocol = data::Protocol::Loso;
  const auto folds = data::make_folds(ds, p);
  ASSERT_EQ(folds.size(), 3u);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  const auto r = fit(m, ds, folds, cfg).report;
  ASSERT_EQ(r.folds.size(), 3u);
  std::vector<double> acc;
  for (const auto& f : r.folds) acc.push_back(f.test_accuracy);
  const double mean = (acc[0] + acc[1] + acc[2]) / 3.0;
  double var = 0.0;
  for (double a : acc) var += (a - mean) * (a - mean);
  EXPECT_DOUBLE_EQ(r.mean_accuracy, mean);
  EXPECT_DOUBLE_EQ(r.std_accuracy, std::sqrt(var / 3.0));
}

TEST(Fit, NeverTrainsOnTestSamples) {
  const auto m = compact_model();
  const auto ds = separable_local(2);
  data::ProtocolSpec p;
  p.train_trials = data::parse_trial_set("1-6");
  p.test_trials = data::parse_trial_set("7-9");
  const auto folds = data::make_folds(ds, p);
  std::set<std::size_t> test_ids, seen;
  for (const auto& f : folds) test_ids.insert(f.test.begin(), f.test.end());
  FitHooks hooks;
  hooks.on_train_batch = [&](std::span<const std::size_t> ids) { seen.insert(ids.begin(), ids.end()); };
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 5;
  fit(m, ds, folds, cfg, hooks);
  EXPECT_EQ(seen.size(), ds.size() - test_ids.size());
  for (auto i : seen) EXPECT_EQ(test_ids.count(i), 0u) << i;
}

TEST(Fit, ZeroLearningRateLeavesInitialParameters) {
  const auto m = compact_model();
  const auto ds = separable_local();
  const data::Split folds[] = {six_three(ds)};
  TrainConfig cfg;
  cfg.lr = 0.0;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  const auto out = fit(m, ds, folds, cfg);
  const auto init = m.init_params(derive_seed(cfg.seed, 0));
  for (const auto& p : init) EXPECT_EQ(out.params[0][p.name].value, p.value) << p.name;
}

TEST(Fit, DivergenceReportsEpochAndBatch) {
  const auto m = compact_model();
  const auto ds = separable_local();
  const data::Split folds[] = {six_three(ds)};
  TrainConfig cfg;
  cfg.lr = 1e300;
  cfg.warmup_fraction = 0.0;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  try {
    fit(m, ds, folds, cfg);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("batch"), std::string::npos);
  }
}

TEST(Fit, RejectsInconsistentInputs) {
  const auto m = compact_model();
  const auto ds = separable_local();
  EXPECT_THROW(fit(m, ds, std::span<const data::Split>{}, TrainConfig{}), SplitError);
  auto c = compact_config();
  c.n_classes = 4;
  const model::Pgcn<double> four(c, shipped_montage(), shipped_partitions());
  const data::Split folds[] = {six_three(ds)};
  EXPECT_THROW(fit(four, ds, folds, TrainConfig{}), ConfigError);
}

TEST(Fit, FirstStepsDecreaseLossOnAFixedBatch) {
  const auto m = compact_model();
  const auto ds = separable_local();
  std::vector<MatrixD> xs;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < ds.size(); i += 3) {
    xs.push_back(ds.samples[i].features);
    labels.push_back(ds.samples[i].label);
  }
  TrainConfig cfg;
  cfg.warmup_fraction = 0.0;
  cfg.lr = 1e-3;
  int decreasing = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto params = m.init_params(seed);
    auto st = adam_init(params);
    std::vector<double> losses;
    for (int k = 0; k <= 5; ++k) {
      diff::Tape<double> t;
      auto loss = diff::cross_entropy<double>(m.forward(t, params, xs), labels);
      losses.push_back(loss.value()(0, 0));
      if (k == 5) break;
      params.zero_grad();
      t.backward(loss);
      adamw_step(params, st, cfg, 1.0);
    }
    bool strict = true;
    for (std::size_t k = 1; k < losses.size(); ++k) strict = strict && losses[k] < losses[k - 1];
    decreasing += strict;
  }
  EXPECT_GE(decreasing, 18);
}

TEST(Fit, SinglePrecisionRunsAndMatchesShape) {
  const model::Pgcn<float> m(compact_config(), shipped_montage(), shipped_partitions());
  const auto ds = separable_local();
  const data::Split folds[] = {six_three(ds)};
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.precision = Precision::F32;
  cfg.standardize = true;
  const auto out = fit(m, ds, folds, cfg);
  EXPECT_EQ(out.report.epochs.size(), 2u);
  EXPECT_GE(out.report.mean_accuracy, 0.0);
  EXPECT_LE(out.report.mean_accuracy, 1.0);
}

TEST(Report, CsvAndJsonCarryEveryEpoch) {
  Report r;
  r.epochs = {{"f0", 1, 1.5, 0.25, 0.5}, {"f0", 2, 1.25, 0.5, 0.75}};
  r.folds = {{"f0", 0.5, 0.75}};
  r.mean_accuracy = 0.75;
  const auto csv = r.epochs_csv();
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "fold,epoch,train_loss,train_accuracy,test_accuracy");
  const auto j = r.to_json();
  EXPECT_EQ(j.at("epochs").size(), 2u);
  EXPECT_EQ(j.at("folds")[0].at("test_accuracy"), 0.75);
}

}  // namespace
}  // namespace pgcn::train
