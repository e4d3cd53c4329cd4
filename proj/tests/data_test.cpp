// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>

#include "pgcn/data.hpp"
#include "pgcn/error.hpp"
#include "support/helpers.hpp"
#include "support/probe.hpp"

namespace pgcn::data {
namespace {

using testing::TempDir;

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

SynthSpec small_spec(std::size_t subjects = 2, std::size_t trials = 6, std::size_t per_trial = 4) {
  SynthSpec s = default_synth_spec(testing::shipped_montage(), SynthMode::LongRange);
  s.n_subjects = subjects;
  s.n_trials = trials;
  s.samples_per_trial = per_trial;
  return s;
}

// Values representable in float32, so a bundle round trip is exact.
Dataset float_exact(Dataset ds) {
  for (auto& s : ds.samples) s.features = s.features.cast<float>().cast<double>();
  return ds;
}

std::multiset<std::size_t> ids(const Split& sp) {
  std::multiset<std::size_t> out(sp.train.begin(), sp.train.end());
  out.insert(sp.test.begin(), sp.test.end());
  return out;
}

void expect_partition(const Dataset& ds, const Split& sp) {
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), 0);
  EXPECT_EQ(ids(sp), std::multiset<std::size_t>(all.begin(), all.end())) << sp.name;
  std::vector<std::size_t> a = sp.train, b = sp.test;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<std::size_t> both;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
  EXPECT_TRUE(both.empty()) << sp.name;
}

std::set<int> trials_of(const Dataset& ds, const std::vector<std::size_t>& idx, int subject, int session) {
  std::set<int> out;
  for (auto i : idx) {
    if (ds.samples[i].subject == subject && ds.samples[i].session == session) out.insert(ds.samples[i].trial);
  }
  return out;
}

// ---- bundles -----------------------------------------------------------------

TEST(Bundle, TwoTrialsOfTenGiveTwentySamples) {
  TempDir dir;
  auto spec = small_spec(1, 2, 10);
  const auto ds = float_exact(synth_generate(spec, 1));
  write_bundle(ds, dir.path());
  const auto back = load_bundle(dir.path());
  EXPECT_EQ(back.size(), 20u);
  EXPECT_EQ(back.n_electrodes, 62u);
  EXPECT_EQ(back.n_bands, 5u);
  EXPECT_EQ(back.samples[10].trial, 2);
  EXPECT_EQ(back.samples[10].label, 1u);
}

TEST(Bundle, LoadOfWriteReproducesDataset) {
  TempDir dir;
  const auto ds = float_exact(synth_generate(small_spec(), 2));
  write_bundle(ds, dir.path());
  const auto back = load_bundle(dir.path());
  ASSERT_EQ(back.size(), ds.size());
  EXPECT_EQ(back.n_classes, ds.n_classes);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(back.samples[i].features, ds.samples[i].features);
    EXPECT_EQ(back.samples[i].label, ds.samples[i].label);
    EXPECT_EQ(back.samples[i].subject, ds.samples[i].subject);
    EXPECT_EQ(back.samples[i].session, ds.samples[i].session);
    EXPECT_EQ(back.samples[i].trial, ds.samples[i].trial);
  }
}

TEST(Bundle, RewriteIsByteIdentical) {
  TempDir a, b;
  write_bundle(synth_generate(small_spec(), 3), a.path());
  write_bundle(load_bundle(a.path()), b.path());
  for (const auto& entry : std::filesystem::directory_iterator(a.path())) {
    EXPECT_EQ(read_bytes(entry.path()), read_bytes(b / entry.path().filename().string()))
        << entry.path().filename();
  }
}

TEST(Bundle, RawFilesAreLittleEndianFloat32RowMajor) {
  TempDir dir;
  Dataset ds;
  ds.n_classes = 2;
  ds.n_electrodes = 2;
  ds.n_bands = 3;
  MatrixD x(2, 3);
  x << 1, 2, 3, 4, 5, -0.5;
  ds.samples.push_back(Sample{x, 1, 7, 1, 4});
  write_bundle(ds, dir.path());
  const auto bytes = read_bytes(dir / trial_file_name(7, 1, 4));
  ASSERT_EQ(bytes.size(), 24u);
  // 2.0f = 0x40000000, little-endian at offset 4.
  EXPECT_EQ(static_cast<unsigned char>(bytes[7]), 0x40);
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 0x00);
  // -0.5f = 0xBF000000 is the last value.
  EXPECT_EQ(static_cast<unsigned char>(bytes[23]), 0xBF);
}

class BrokenBundle : public ::testing::Test {
 protected:
  void SetUp() override {
    write_bundle(synth_generate(small_spec(1, 2, 3), 4), dir.path());
    manifest = nlohmann::json::parse(read_bytes(dir / "manifest.json"));
  }
  void save() { std::ofstream(dir / "manifest.json") << manifest.dump(); }
  TempDir dir;
  nlohmann::json manifest;
};

TEST_F(BrokenBundle, LabelOutOfRange) {
  manifest["n_classes"] = 4;
  manifest["trials"][0]["label"] = 5;
  save();
  EXPECT_THROW(load_bundle(dir.path()), LabelError);
}

TEST_F(BrokenBundle, ShapeMismatch) {
  manifest["shape"] = {62, 4};
  save();
  EXPECT_THROW(load_bundle(dir.path()), FormatError);
}

TEST_F(BrokenBundle, DtypeMismatch) {
  manifest["dtype"] = "float64";
  save();
  EXPECT_THROW(load_bundle(dir.path()), FormatError);
}

TEST_F(BrokenBundle, SampleCountMismatch) {
  manifest["trials"][1]["n_samples"] = 4;
  save();
  EXPECT_THROW(load_bundle(dir.path()), FormatError);
}

TEST_F(BrokenBundle, MissingFileOrManifest) {
  std::filesystem::remove(dir / trial_file_name(1, 1, 2));
  EXPECT_THROW(load_bundle(dir.path()), FormatError);
  std::filesystem::remove(dir / "manifest.json");
  EXPECT_THROW(load_bundle(dir.path()), FormatError);
}

TEST_F(BrokenBundle, MalformedManifest) {
  std::ofstream(dir / "manifest.json") << "{\"trials\": [";
  EXPECT_THROW(load_bundle(dir.path()), FormatError);
}

// ---- synthetic generator -------------------------------------------------------

TEST(Synth, SameSeedSameDataset) {
  const auto spec = small_spec();
  const auto a = synth_generate(spec, 11), b = synth_generate(spec, 11), c = synth_generate(spec, 12);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.samples[i].features, b.samples[i].features);
  EXPECT_NE(a.samples[0].features, c.samples[0].features);
}

TEST(Synth, LayoutAndLabels) {
  auto spec = small_spec(2, 7, 3);
  spec.n_sessions = 2;
  const auto ds = synth_generate(spec, 5);
  EXPECT_EQ(ds.size(), 2u * 2u * 7u * 3u);
  EXPECT_EQ(ds.subjects(), (std::vector<int>{1, 2}));
  for (const auto& s : ds.samples) {
    EXPECT_EQ(s.label, static_cast<std::size_t>((s.trial - 1) % 3));
    EXPECT_GE(s.session, 1);
    EXPECT_LE(s.session, 2);
  }
  EXPECT_NO_THROW(ds.validate());
}

TEST(Synth, DefaultGeneratorElectrodes) {
  const auto& m = testing::shipped_montage();
  const auto lr = default_synth_spec(m, SynthMode::LongRange);
  EXPECT_EQ(lr.pair_first, m.index_of("F7"));
  EXPECT_EQ(lr.pair_second, m.index_of("PO8"));
  const auto local = default_synth_spec(m, SynthMode::Local);
  const auto& e = local.local_electrodes;
  EXPECT_NE(std::find(e.begin(), e.end(), m.index_of("T7")), e.end());
  EXPECT_NE(std::find(e.begin(), e.end(), m.index_of("C5")), e.end());
  EXPECT_GT(e.size(), 2u);
}

TEST(Synth, NoiselessLocalModeIsLinearlySeparable) {
  auto spec = default_synth_spec(testing::shipped_montage(), SynthMode::Local);
  spec.noise_sd = 0.0;
  spec.n_trials = 9;
  spec.samples_per_trial = 5;
  const auto ds = synth_generate(spec, 6);
  const auto sp = split_subject_dependent(ds, parse_trial_set("1-6"), parse_trial_set("7-9"));
  for (auto e : spec.local_electrodes) {
    EXPECT_EQ(testing::linear_probe_accuracy(ds, sp, static_cast<Eigen::Index>(e), 2000, 1.0), 1.0);
  }
}

TEST(Synth, NoiselessLongRangeLabelsFollowThePairSum) {
  auto spec = small_spec(3, 6, 5);
  spec.noise_sd = 0.0;
  for (std::size_t classes : {2u, 3u, 4u, 5u}) {
    spec.n_classes = classes;
    const auto ds = synth_generate(spec, 7 + classes);
    for (const auto& s : ds.samples) {
      for (Eigen::Index b = 0; b < 5; ++b) {
        // Generator formula: (x_a + x_b) / 2 = y - (C - 1) / 2.
        const double sum = s.features(static_cast<Eigen::Index>(spec.pair_first), b) +
                           s.features(static_cast<Eigen::Index>(spec.pair_second), b);
        const double y = sum / 2.0 + (static_cast<double>(classes) - 1.0) / 2.0;
        EXPECT_NEAR(y, static_cast<double>(s.label), 1e-12);
        EXPECT_EQ(long_range_label(s.features, spec, static_cast<std::size_t>(b)), s.label);
      }
    }
  }
}

TEST(Synth, LongRangeSignalIsMaskedAtEachElectrode) {
  auto spec = small_spec(1, 15, 40);
  spec.noise_sd = 0.0;
  const auto ds = synth_generate(spec, 8);
  // Per-electrode values spread far wider than the class spacing.
  double sq = 0.0;
  for (const auto& s : ds.samples) {
    const double d = s.features(static_cast<Eigen::Index>(spec.pair_first), 0) - class_level(s.label, 3);
    sq += d * d;
  }
  EXPECT_GT(std::sqrt(sq / static_cast<double>(ds.size())), 1.0);
}

TEST(Synth, SpecValidationAndJson) {
  auto spec = small_spec();
  spec.n_trials = 0;
  EXPECT_THROW(synth_generate(spec, 1), ConfigError);
  spec = small_spec();
  spec.pair_second = spec.pair_first;
  EXPECT_THROW(synth_generate(spec, 1), ConfigError);
  spec = small_spec();
  spec.noise_sd = 0.25;
  spec.masking_sd = 1.5;
  EXPECT_EQ(to_json(synth_spec_from_json(to_json(spec), SynthSpec{})), to_json(spec));
  EXPECT_THROW(synth_mode_from_string("regional"), ConfigError);
  EXPECT_EQ(synth_mode_from_string(to_string(SynthMode::Local)), SynthMode::Local);
}

// ---- splits --------------------------------------------------------------------

TEST(Splits, NineSixSubjectDependent) {
  auto spec = small_spec(2, 15, 2);
  spec.n_sessions = 3;
  const auto ds = synth_generate(spec, 9);
  const auto sp = split_subject_dependent(ds, parse_trial_set("1-9"), parse_trial_set("10-15"));
  expect_partition(ds, sp);
  for (int subj : {1, 2}) {
    for (int sess : {1, 2, 3}) {
      EXPECT_EQ(trials_of(ds, sp.train, subj, sess).size(), 9u);
      EXPECT_EQ(trials_of(ds, sp.test, subj, sess).size(), 6u);
      EXPECT_EQ(*trials_of(ds, sp.train, subj, sess).rbegin(), 9);
    }
  }
}

TEST(Splits, SubjectDependentErrors) {
  const auto ds = synth_generate(small_spec(1, 15, 1), 10);
  EXPECT_THROW(split_subject_dependent(ds, parse_trial_set("1-9"), {}), SplitError);
  EXPECT_THROW(split_subject_dependent(ds, parse_trial_set("1-9"), parse_trial_set("9-15")), SplitError);
  EXPECT_THROW(split_subject_dependent(ds, parse_trial_set("1-9"), parse_trial_set("10-16")), SplitError);
}

TEST(Splits, LastTwoPerEmotionHoldout) {
  auto spec = small_spec(2, 24, 2);
  spec.n_classes = 4;
  const auto ds = synth_generate(spec, 11);
  const auto sp = split_last_trials_per_class(ds, 2);
  expect_partition(ds, sp);
  for (int subj : {1, 2}) {
    EXPECT_EQ(trials_of(ds, sp.train, subj, 1).size(), 16u);
    EXPECT_EQ(trials_of(ds, sp.test, subj, 1).size(), 8u);
    const auto held = trials_of(ds, sp.test, subj, 1);
    EXPECT_EQ(held, (std::set<int>{17, 18, 19, 20, 21, 22, 23, 24}));
  }
  EXPECT_THROW(split_last_trials_per_class(ds, 6), SplitError);
}

TEST(Splits, LeaveOneSubjectOut) {
  const auto ds = synth_generate(small_spec(15, 3, 2), 12);
  const auto sp = split_loso(ds, 3);
  expect_partition(ds, sp);
  std::set<int> train_subjects, test_subjects;
  for (auto i : sp.train) train_subjects.insert(ds.samples[i].subject);
  for (auto i : sp.test) test_subjects.insert(ds.samples[i].subject);
  EXPECT_EQ(train_subjects.size(), 14u);
  EXPECT_EQ(test_subjects, std::set<int>{3});
  EXPECT_THROW(split_loso(ds, 16), SplitError);
  EXPECT_THROW(split_loso(synth_generate(small_spec(1, 3, 2), 1), 1), SplitError);
}

TEST(Splits, FoldsPerSessionOrSubject) {
  auto spec = small_spec(3, 15, 1);
  spec.n_sessions = 2;
  const auto ds = synth_generate(spec, 13);
  ProtocolSpec p;
  p.train_trials = parse_trial_set("1-9");
  p.test_trials = parse_trial_set("10-15");
  const auto sd = make_folds(ds, p);
  EXPECT_EQ(sd.size(), 6u);
  for (const auto& f : sd) {
    EXPECT_EQ(f.train.size(), 9u);
    EXPECT_EQ(f.test.size(), 6u);
  }
  p.protocol = Protocol::Loso;
  const auto loso = make_folds(ds, p);
  ASSERT_EQ(loso.size(), 3u);
  for (const auto& f : loso) expect_partition(ds, f);
  p.protocol = Protocol::LastPerClass;
  EXPECT_EQ(make_folds(ds, p).size(), 6u);
  EXPECT_EQ(protocol_from_string(to_string(Protocol::LastPerClass)), Protocol::LastPerClass);
  EXPECT_THROW(protocol_from_string("kfold"), ConfigError);
}

TEST(Splits, RandomSplitsArePartitions) {
  std::mt19937_64 rng(14);
  const auto ds = synth_generate(small_spec(4, 10, 2), 15);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> t(10);
    std::iota(t.begin(), t.end(), 1);
    std::shuffle(t.begin(), t.end(), rng);
    const auto cut = 1 + static_cast<std::ptrdiff_t>(rng() % 9);
    const std::set<int> train(t.begin(), t.begin() + cut), test(t.begin() + cut, t.end());
    expect_partition(ds, split_subject_dependent(ds, train, test));
    expect_partition(ds, split_loso(ds, static_cast<int>(1 + rng() % 4)));
  }
}

TEST(TrialSets, Parsing) {
  EXPECT_EQ(parse_trial_set("1-9").size(), 9u);
  EXPECT_EQ(parse_trial_set("1,3,5-7"), (std::set<int>{1, 3, 5, 6, 7}));
  EXPECT_EQ(parse_trial_set("4"), std::set<int>{4});
  EXPECT_THROW(parse_trial_set("9-1"), SplitError);
  EXPECT_THROW(parse_trial_set("a-b"), ConfigError);
}

// ---- standardisation -------------------------------------------------------------

TEST(Standardizer, UsesTrainingStatisticsOnly) {
  const auto ds = synth_generate(small_spec(2, 6, 5), 16);
  const auto sp = split_subject_dependent(ds, parse_trial_set("1-4"), parse_trial_set("5-6"));
  const auto st = Standardizer::fit(ds, sp.train);
  MatrixD mean = MatrixD::Zero(62, 5), sq = MatrixD::Zero(62, 5);
  for (auto i : sp.train) {
    const MatrixD z = st.apply(ds.samples[i].features);
    mean += z;
    sq += z.cwiseAbs2();
  }
  mean /= static_cast<double>(sp.train.size());
  sq /= static_cast<double>(sp.train.size());
  EXPECT_LE(mean.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((sq.array() - 1.0).abs().maxCoeff(), 1e-9);
  const auto full = Standardizer::fit(ds, [&] {
    std::vector<std::size_t> all(ds.size());
    std::iota(all.begin(), all.end(), 0);
    return all;
  }());
  EXPECT_NE(full.mean, st.mean);
  EXPECT_THROW(Standardizer::fit(ds, {}), SplitError);
}

TEST(Standardizer, ConstantFeatureKeepsUnitScale) {
  Dataset ds;
  ds.n_classes = 2;
  ds.n_electrodes = 1;
  ds.n_bands = 2;
  MatrixD a(1, 2), b(1, 2);
  a << 3, 1;
  b << 3, 5;
  ds.samples = {Sample{a, 0, 1, 1, 1}, Sample{b, 1, 1, 1, 2}};
  const auto st = Standardizer::fit(ds, {0, 1});
  EXPECT_EQ(st.stddev(0, 0), 1.0);
  EXPECT_EQ(st.apply(a)(0, 0), 0.0);
  EXPECT_EQ(st.apply(b)(0, 1), 1.0);
}

TEST(DatasetValidation, RejectsInconsistentSamples) {
  Dataset ds;
  ds.n_classes = 2;
  ds.n_electrodes = 2;
  ds.n_bands = 2;
  ds.samples = {Sample{MatrixD::Zero(2, 2), 2, 1, 1, 1}};
  EXPECT_THROW(ds.validate(), LabelError);
  ds.samples = {Sample{MatrixD::Zero(2, 3), 0, 1, 1, 1}};
  EXPECT_THROW(ds.validate(), FormatError);
  MatrixD bad = MatrixD::Zero(2, 2);
  bad(0, 0) = std::numeric_limits<double>::infinity();
  ds.samples = {Sample{bad, 0, 1, 1, 1}};
  EXPECT_THROW(ds.validate(), FormatError);
}

}  // namespace
}  // namespace pgcn::data
