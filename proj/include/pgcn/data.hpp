// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "pgcn/geometry.hpp"
#include "pgcn/matrix.hpp"

namespace pgcn::data {

// One feature matrix (electrodes x bands) with its provenance.
struct Sample {
  MatrixD features;
  std::size_t label = 0;
  int subject = 0;
  int session = 0;
  int trial = 0;
};

struct Dataset {
  std::vector<Sample> samples;
  std::size_t n_classes = 0;
  std::size_t n_electrodes = 0;
  std::size_t n_bands = 0;

  std::size_t size() const { return samples.size(); }
  std::vector<int> subjects() const;  // ascending, unique
  // Throws FormatError / LabelError on inconsistent content.
  void validate() const;
};

// ---- bundle I/O ------------------------------------------------------------
//
// <dir>/manifest.json:
//   {"format": "pgcn-bundle", "version": 1, "dtype": "float32",
//    "shape": [n_electrodes, n_bands], "n_classes": C,
//    "trials": [{"subject": s, "session": k, "trial": t, "label": y,
//                "n_samples": n, "file": "trial_s_k_t.bin"}, ...]}
// Each trial file holds n * n_electrodes * n_bands little-endian IEEE-754
// float32 values, row-major, no header. Samples inherit the trial label.

Dataset load_bundle(const std::filesystem::path& dir);
void write_bundle(const Dataset& ds, const std::filesystem::path& dir);
std::string trial_file_name(int subject, int session, int trial);

// ---- synthetic data --------------------------------------------------------

enum class SynthMode { Local, LongRange };

SynthMode synth_mode_from_string(const std::string& s);
std::string to_string(SynthMode m);

struct SynthSpec {
  std::size_t n_subjects = 3;
  std::size_t n_sessions = 1;
  std::size_t n_trials = 15;
  std::size_t samples_per_trial = 10;
  std::size_t n_classes = 3;
  double noise_sd = 0.3;
  SynthMode mode = SynthMode::LongRange;
  std::size_t n_electrodes = 62;
  std::size_t n_bands = 5;
  // Local mode: electrodes receiving the class signal.
  std::vector<std::size_t> local_electrodes;
  // Long-range mode: the two electrodes whose sum carries the class.
  std::size_t pair_first = 0;
  std::size_t pair_second = 1;
  // Standard deviations of the nuisance terms.
  double subject_bias_sd = 0.5;
  double masking_sd = 4.0;
};

// Spec with generator electrodes resolved on `montage`: local mode uses T7
// and its grid neighbours, long-range mode pairs F7 with PO8. Falls back
// to index-based choices when those names are absent.
SynthSpec default_synth_spec(const geometry::Montage& montage, SynthMode mode);

// Class offset carried by label y: y - (C - 1) / 2.
double class_level(std::size_t label, std::size_t n_classes);

// Pure function of (spec, seed). Trial t of every subject/session carries
// label (t - 1) mod C.
//
// Local: signal electrodes get +level in every band; other electrodes carry
//   a per-subject bias; all entries get N(0, noise_sd) noise.
// Long-range: per band, first = level + u + b, second = level - u - b with u
//   a per-sample masking draw and b a per-subject bias; so first + second =
//   2 * level + noise while each electrode alone is dominated by u. Other
//   electrodes carry per-subject bias; all entries get N(0, noise_sd).
Dataset synth_generate(const SynthSpec& spec, std::uint64_t seed);

// Inverse of the long-range construction at zero noise.
std::size_t long_range_label(const MatrixD& features, const SynthSpec& spec, std::size_t band = 0);

nlohmann::json to_json(const SynthSpec& s);
SynthSpec synth_spec_from_json(const nlohmann::json& j, SynthSpec base);

// ---- splits ----------------------------------------------------------------

// Index views into a Dataset.
struct Split {
  std::string name;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Within each subject/session: samples of `train_trials` train, samples of
// `test_trials` test. All samples of one subject/session pooled into one
// split.
Split split_subject_dependent(const Dataset& ds, const std::set<int>& train_trials,
                              const std::set<int>& test_trials);

// Within each subject/session, the last `per_class` trials (by trial id) of
// every label are held out; the remaining trials train.
Split split_last_trials_per_class(const Dataset& ds, std::size_t per_class);

Split split_loso(const Dataset& ds, int held_out_subject);

enum class Protocol { SubjectDependent, LastPerClass, Loso };

Protocol protocol_from_string(const std::string& s);
std::string to_string(Protocol p);

struct ProtocolSpec {
  Protocol protocol = Protocol::SubjectDependent;
  std::set<int> train_trials;  // SubjectDependent
  std::set<int> test_trials;   // SubjectDependent
  std::size_t per_class = 2;   // LastPerClass
};

// Folds of a protocol: subject-dependent protocols train one fold per
// (subject, session); LOSO trains one fold per subject.
std::vector<Split> make_folds(const Dataset& ds, const ProtocolSpec& spec);

// Inclusive integer range "a-b" or comma list "1,2,5-7".
std::set<int> parse_trial_set(const std::string& text);

// ---- scaling ---------------------------------------------------------------

// Per-entry z-score with statistics from the given (training) indices.
struct Standardizer {
  MatrixD mean;
  MatrixD stddev;

  static Standardizer fit(const Dataset& ds, const std::vector<std::size_t>& indices);
  MatrixD apply(const MatrixD& x) const;
};

}  // namespace pgcn::data
