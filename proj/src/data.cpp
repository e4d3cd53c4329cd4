// SPDX-License-Identifier: Apache-2.0
#include "pgcn/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <tuple>

#include "pgcn/error.hpp"

namespace pgcn::data {

namespace fs = std::filesystem;

std::vector<int> Dataset::subjects() const {
  std::set<int> s;
  for (const auto& x : samples) s.insert(x.subject);
  return {s.begin(), s.end()};
}

void Dataset::validate() const {
  if (n_classes == 0) throw FormatError("dataset has no classes");
  for (const auto& s : samples) {
    if (static_cast<std::size_t>(s.features.rows()) != n_electrodes ||
        static_cast<std::size_t>(s.features.cols()) != n_bands) {
      throw FormatError("sample feature shape differs from dataset shape");
    }
    if (!s.features.allFinite()) throw FormatError("sample features must be finite");
    if (s.label >= n_classes) {
      throw LabelError("label " + std::to_string(s.label) + " out of range for " +
                       std::to_string(n_classes) + " classes");
    }
  }
}

// ---- bundle I/O ----------------------------------------------------------------

std::string trial_file_name(int subject, int session, int trial) {
  return "trial_" + std::to_string(subject) + "_" + std::to_string(session) + "_" +
         std::to_string(trial) + ".bin";
}

Dataset load_bundle(const fs::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw FormatError("bundle: missing manifest.json in " + dir.string());
  nlohmann::json m;
  try {
    mf >> m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bundle manifest: ") + e.what());
  }
  Dataset ds;
  try {
    if (m.value("dtype", std::string("float32")) != "float32") {
      throw FormatError("bundle: only float32 trial files are supported");
    }
    const auto shape = m.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2 || shape[0] == 0 || shape[1] == 0) {
      throw FormatError("bundle: shape must be [electrodes, bands]");
    }
    ds.n_electrodes = shape[0];
    ds.n_bands = shape[1];
    ds.n_classes = m.at("n_classes").get<std::size_t>();
    const std::size_t per_sample = ds.n_electrodes * ds.n_bands;
    for (const auto& t : m.at("trials")) {
      const int subject = t.at("subject").get<int>();
      const int session = t.at("session").get<int>();
      const int trial = t.at("trial").get<int>();
      const auto label = t.at("label").get<std::size_t>();
      const auto n = t.at("n_samples").get<std::size_t>();
      if (label >= ds.n_classes) {
        throw LabelError("bundle: trial " + std::to_string(trial) + " label " + std::to_string(label) +
                         " out of range");
      }
      const auto file = dir / t.value("file", trial_file_name(subject, session, trial));
      std::ifstream in(file, std::ios::binary);
      if (!in) throw FormatError("bundle: missing trial file " + file.string());
      const auto expect = static_cast<std::uintmax_t>(n * per_sample * 4);
      if (fs::file_size(file) != expect) {
        throw FormatError("bundle: " + file.filename().string() + " has " +
                          std::to_string(fs::file_size(file)) + " bytes, manifest implies " +
                          std::to_string(expect));
      }
      std::vector<unsigned char> raw(expect);
      in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
      for (std::size_t s = 0; s < n; ++s) {
        Sample smp;
        smp.features.resize(static_cast<Eigen::Index>(ds.n_electrodes), static_cast<Eigen::Index>(ds.n_bands));
        for (std::size_t k = 0; k < per_sample; ++k) {
          const unsigned char* b = raw.data() + 4 * (s * per_sample + k);
          const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                                     (static_cast<std::uint32_t>(b[2]) << 16) |
                                     (static_cast<std::uint32_t>(b[3]) << 24);
          smp.features.data()[k] = static_cast<double>(std::bit_cast<float>(bits));
        }
        smp.label = label;
        smp.subject = subject;
        smp.session = session;
        smp.trial = trial;
        ds.samples.push_back(std::move(smp));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bundle manifest: ") + e.what());
  }
  ds.validate();
  return ds;
}

void write_bundle(const Dataset& ds, const fs::path& dir) {
  ds.validate();
  fs::create_directories(dir);
  using Key = std::tuple<int, int, int>;
  std::vector<Key> order;
  std::map<Key, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    Key k{s.subject, s.session, s.trial};
    auto [it, fresh] = groups.try_emplace(k);
    if (fresh) order.push_back(k);
    it->second.push_back(i);
  }
  nlohmann::json trials = nlohmann::json::array();
  for (const auto& k : order) {
    const auto& idx = groups[k];
    const auto& [subject, session, trial] = k;
    const std::size_t label = ds.samples[idx.front()].label;
    const std::string name = trial_file_name(subject, session, trial);
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw FormatError("bundle: cannot write " + (dir / name).string());
    for (auto i : idx) {
      const auto& s = ds.samples[i];
      if (s.label != label) throw FormatError("bundle: samples of one trial must share a label");
      for (Eigen::Index e = 0; e < s.features.size(); ++e) {
        const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(s.features.data()[e]));
        for (int b = 0; b < 4; ++b) out.put(static_cast<char>((bits >> (8 * b)) & 0xFF));
      }
    }
    trials.push_back({{"subject", subject},
                      {"session", session},
                      {"trial", trial},
                      {"label", label},
                      {"n_samples", idx.size()},
                      {"file", name}});
  }
  const nlohmann::json manifest = {{"format", "pgcn-bundle"},
                                   {"version", 1},
                                   {"dtype", "float32"},
                                   {"shape", {ds.n_electrodes, ds.n_bands}},
                                   {"n_classes", ds.n_classes},
                                   {"trials", trials}};
  std::ofstream mf(dir / "manifest.json");
  mf << manifest.dump(2) << '\n';
  if (!mf) throw FormatError("bundle: cannot write manifest");
}

// ---- synthetic data ------------------------------------------------------------

SynthMode synth_mode_from_string(const std::string& s) {
  if (s == "local") return SynthMode::Local;
  if (s == "long-range") return SynthMode::LongRange;
  throw ConfigError("unknown synthetic mode " + s + " (expected local or long-range)");
}

std::string to_string(SynthMode m) { return m == SynthMode::Local ? "local" : "long-range"; }

SynthSpec default_synth_spec(const geometry::Montage& montage, SynthMode mode) {
  SynthSpec spec;
  spec.mode = mode;
  spec.n_electrodes = montage.count();
  auto pick = [&](const char* name, std::size_t fallback) {
    return montage.contains(name) ? montage.index_of(name) : std::min(fallback, montage.count() - 1);
  };
  const std::size_t center = pick("T7", 0);
  spec.local_electrodes = {center};
  const auto nb = geometry::grid_neighbors(montage);
  for (auto j : nb[center]) spec.local_electrodes.push_back(j);
  std::sort(spec.local_electrodes.begin(), spec.local_electrodes.end());
  spec.pair_first = pick("F7", 0);
  spec.pair_second = pick("PO8", montage.count() - 1);
  return spec;
}

double class_level(std::size_t label, std::size_t n_classes) {
  return static_cast<double>(label) - 0.5 * static_cast<double>(n_classes - 1);
}

Dataset synth_generate(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.n_subjects == 0 || spec.n_sessions == 0 || spec.n_trials == 0 || spec.samples_per_trial == 0) {
    throw ConfigError("synthetic spec: counts must be positive");
  }
  if (spec.n_classes < 2 || spec.n_electrodes == 0 || spec.n_bands == 0) {
    throw ConfigError("synthetic spec: need >= 2 classes and a non-empty feature shape");
  }
  if (spec.noise_sd < 0.0) throw ConfigError("synthetic spec: noise_sd must be >= 0");
  const auto ne = static_cast<Eigen::Index>(spec.n_electrodes);
  const auto nb = static_cast<Eigen::Index>(spec.n_bands);
  std::vector<bool> signal(spec.n_electrodes, false);
  if (spec.mode == SynthMode::Local) {
    if (spec.local_electrodes.empty()) throw ConfigError("synthetic spec: no local signal electrodes");
    for (auto i : spec.local_electrodes) {
      if (i >= spec.n_electrodes) throw ConfigError("synthetic spec: signal electrode out of range");
      signal[i] = true;
    }
  } else {
    if (spec.pair_first >= spec.n_electrodes || spec.pair_second >= spec.n_electrodes ||
        spec.pair_first == spec.pair_second) {
      throw ConfigError("synthetic spec: invalid long-range electrode pair");
    }
    signal[spec.pair_first] = signal[spec.pair_second] = true;
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset ds;
  ds.n_classes = spec.n_classes;
  ds.n_electrodes = spec.n_electrodes;
  ds.n_bands = spec.n_bands;
  for (std::size_t subj = 0; subj < spec.n_subjects; ++subj) {
    MatrixD bias(ne, nb);
    for (Eigen::Index i = 0; i < bias.size(); ++i) bias.data()[i] = spec.subject_bias_sd * normal(rng);
    for (std::size_t sess = 0; sess < spec.n_sessions; ++sess) {
      for (std::size_t trial = 0; trial < spec.n_trials; ++trial) {
        const std::size_t label = trial % spec.n_classes;
        const double level = class_level(label, spec.n_classes);
        for (std::size_t k = 0; k < spec.samples_per_trial; ++k) {
          MatrixD x(ne, nb);
          for (Eigen::Index i = 0; i < ne; ++i) {
            const bool sig = signal[static_cast<std::size_t>(i)];
            for (Eigen::Index b = 0; b < nb; ++b) x(i, b) = sig ? 0.0 : bias(i, b);
          }
          if (spec.mode == SynthMode::Local) {
            for (auto i : spec.local_electrodes) x.row(static_cast<Eigen::Index>(i)).array() += level;
          } else {
            const auto a = static_cast<Eigen::Index>(spec.pair_first);
            const auto c = static_cast<Eigen::Index>(spec.pair_second);
            for (Eigen::Index b = 0; b < nb; ++b) {
              const double u = spec.masking_sd * normal(rng);
              x(a, b) = level + u + bias(a, b);
              x(c, b) = level - u - bias(a, b);
            }
          }
          if (spec.noise_sd > 0.0) {
            for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] += spec.noise_sd * normal(rng);
          }
          ds.samples.push_back(Sample{std::move(x), label, static_cast<int>(subj + 1),
                                      static_cast<int>(sess + 1), static_cast<int>(trial + 1)});
        }
      }
    }
  }
  return ds;
}

std::size_t long_range_label(const MatrixD& features, const SynthSpec& spec, std::size_t band) {
  const double s = features(static_cast<Eigen::Index>(spec.pair_first), static_cast<Eigen::Index>(band)) +
                   features(static_cast<Eigen::Index>(spec.pair_second), static_cast<Eigen::Index>(band));
  const double y = 0.5 * s + 0.5 * static_cast<double>(spec.n_classes - 1);
  const double r = std::clamp(std::round(y), 0.0, static_cast<double>(spec.n_classes - 1));
  return static_cast<std::size_t>(r);
}

nlohmann::json to_json(const SynthSpec& s) {
  return {{"n_subjects", s.n_subjects},
          {"n_sessions", s.n_sessions},
          {"n_trials", s.n_trials},
          {"samples_per_trial", s.samples_per_trial},
          {"n_classes", s.n_classes},
          {"noise_sd", s.noise_sd},
          {"mode", to_string(s.mode)},
          {"n_electrodes", s.n_electrodes},
          {"n_bands", s.n_bands},
          {"local_electrodes", s.local_electrodes},
          {"pair_first", s.pair_first},
          {"pair_second", s.pair_second},
          {"subject_bias_sd", s.subject_bias_sd},
          {"masking_sd", s.masking_sd}};
}

SynthSpec synth_spec_from_json(const nlohmann::json& j, SynthSpec s) {
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("n_subjects", s.n_subjects);
    get("n_sessions", s.n_sessions);
    get("n_trials", s.n_trials);
    get("samples_per_trial", s.samples_per_trial);
    get("n_classes", s.n_classes);
    get("noise_sd", s.noise_sd);
    if (j.contains("mode")) s.mode = synth_mode_from_string(j.at("mode").get<std::string>());
    get("n_electrodes", s.n_electrodes);
    get("n_bands", s.n_bands);
    get("local_electrodes", s.local_electrodes);
    get("pair_first", s.pair_first);
    get("pair_second", s.pair_second);
    get("subject_bias_sd", s.subject_bias_sd);
    get("masking_sd", s.masking_sd);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synthetic spec: ") + e.what());
  }
  return s;
}

// ---- splits --------------------------------------------------------------------

namespace {

using SessionKey = std::pair<int, int>;

std::map<SessionKey, std::set<int>> trials_by_session(const Dataset& ds) {
  std::map<SessionKey, std::set<int>> out;
  for (const auto& s : ds.samples) out[{s.subject, s.session}].insert(s.trial);
  return out;
}

template <typename Keep>
Split subject_dependent_where(const Dataset& ds, const std::set<int>& train_trials,
                              const std::set<int>& test_trials, Keep keep) {
  if (test_trials.empty()) throw SplitError("subject-dependent split: empty test range");
  if (train_trials.empty()) throw SplitError("subject-dependent split: empty train range");
  for (int t : train_trials) {
    if (test_trials.count(t)) throw SplitError("subject-dependent split: trial " + std::to_string(t) + " in both ranges");
  }
  for (const auto& [key, trials] : trials_by_session(ds)) {
    if (!keep(key)) continue;
    for (const auto* range : {&train_trials, &test_trials}) {
      for (int t : *range) {
        if (!trials.count(t)) {
          throw SplitError("subject " + std::to_string(key.first) + " session " + std::to_string(key.second) +
                           " has no trial " + std::to_string(t));
        }
      }
    }
  }
  Split sp{"subject-dependent", {}, {}};
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    if (!keep(SessionKey{s.subject, s.session})) continue;
    if (train_trials.count(s.trial)) sp.train.push_back(i);
    else if (test_trials.count(s.trial)) sp.test.push_back(i);
  }
  if (sp.train.empty() || sp.test.empty()) throw SplitError("subject-dependent split selected no samples");
  return sp;
}

template <typename Keep>
Split last_per_class_where(const Dataset& ds, std::size_t per_class, Keep keep) {
  if (per_class == 0) throw SplitError("holdout: per_class must be positive");
  // (subject, session, label) -> ascending trial ids
  std::map<std::tuple<int, int, std::size_t>, std::set<int>> by_label;
  for (const auto& s : ds.samples) {
    if (keep(SessionKey{s.subject, s.session})) by_label[{s.subject, s.session, s.label}].insert(s.trial);
  }
  std::set<std::tuple<int, int, int>> held;
  for (const auto& [key, trials] : by_label) {
    if (trials.size() <= per_class) {
      throw SplitError("holdout: label " + std::to_string(std::get<2>(key)) + " of subject " +
                       std::to_string(std::get<0>(key)) + " has too few trials to hold out " +
                       std::to_string(per_class));
    }
    auto it = trials.end();
    for (std::size_t k = 0; k < per_class; ++k) {
      --it;
      held.insert({std::get<0>(key), std::get<1>(key), *it});
    }
  }
  Split sp{"last-per-class", {}, {}};
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    if (!keep(SessionKey{s.subject, s.session})) continue;
    (held.count({s.subject, s.session, s.trial}) ? sp.test : sp.train).push_back(i);
  }
  if (sp.train.empty() || sp.test.empty()) throw SplitError("holdout split selected no samples");
  return sp;
}

}  // namespace

Split split_subject_dependent(const Dataset& ds, const std::set<int>& train_trials,
                              const std::set<int>& test_trials) {
  return subject_dependent_where(ds, train_trials, test_trials, [](const SessionKey&) { return true; });
}

Split split_last_trials_per_class(const Dataset& ds, std::size_t per_class) {
  return last_per_class_where(ds, per_class, [](const SessionKey&) { return true; });
}

Split split_loso(const Dataset& ds, int held_out_subject) {
  const auto subjects = ds.subjects();
  if (std::find(subjects.begin(), subjects.end(), held_out_subject) == subjects.end()) {
    throw SplitError("LOSO: unknown subject " + std::to_string(held_out_subject));
  }
  if (subjects.size() < 2) throw SplitError("LOSO: need at least two subjects");
  Split sp{"loso-" + std::to_string(held_out_subject), {}, {}};
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    (ds.samples[i].subject == held_out_subject ? sp.test : sp.train).push_back(i);
  }
  return sp;
}

Protocol protocol_from_string(const std::string& s) {
  if (s == "subject-dependent") return Protocol::SubjectDependent;
  if (s == "last-per-class") return Protocol::LastPerClass;
  if (s == "loso") return Protocol::Loso;
  throw ConfigError("unknown protocol " + s + " (expected subject-dependent, last-per-class or loso)");
}

std::string to_string(Protocol p) {
  switch (p) {
    case Protocol::SubjectDependent: return "subject-dependent";
    case Protocol::LastPerClass: return "last-per-class";
    case Protocol::Loso: return "loso";
  }
  return "?";
}

std::vector<Split> make_folds(const Dataset& ds, const ProtocolSpec& spec) {
  std::vector<Split> folds;
  if (spec.protocol == Protocol::Loso) {
    for (int s : ds.subjects()) folds.push_back(split_loso(ds, s));
    return folds;
  }
  for (const auto& [key, trials] : trials_by_session(ds)) {
    (void)trials;
    auto only = [k = key](const SessionKey& other) { return other == k; };
    Split sp = spec.protocol == Protocol::SubjectDependent
                   ? subject_dependent_where(ds, spec.train_trials, spec.test_trials, only)
                   : last_per_class_where(ds, spec.per_class, only);
    sp.name = "subject" + std::to_string(key.first) + "-session" + std::to_string(key.second);
    folds.push_back(std::move(sp));
  }
  return folds;
}

std::set<int> parse_trial_set(const std::string& text) {
  std::set<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      const auto dash = item.find('-', 1);
      if (dash == std::string::npos) {
        out.insert(std::stoi(item));
      } else {
        const int a = std::stoi(item.substr(0, dash));
        const int b = std::stoi(item.substr(dash + 1));
        if (b < a) throw SplitError("trial range " + item + " is reversed");
        for (int t = a; t <= b; ++t) out.insert(t);
      }
    } catch (const std::logic_error&) {
      throw ConfigError("bad trial list entry '" + item + "'");
    }
  }
  return out;
}

// ---- scaling ---------------------------------------------------------------------

Standardizer Standardizer::fit(const Dataset& ds, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw SplitError("standardizer: no training samples");
  const auto r = static_cast<Eigen::Index>(ds.n_electrodes);
  const auto c = static_cast<Eigen::Index>(ds.n_bands);
  Standardizer st{MatrixD::Zero(r, c), MatrixD::Zero(r, c)};
  for (auto i : indices) st.mean += ds.samples[i].features;
  st.mean /= static_cast<double>(indices.size());
  for (auto i : indices) st.stddev += (ds.samples[i].features - st.mean).cwiseAbs2();
  st.stddev = (st.stddev / static_cast<double>(indices.size())).cwiseSqrt();
  for (Eigen::Index k = 0; k < st.stddev.size(); ++k) {
    if (st.stddev.data()[k] < 1e-12) st.stddev.data()[k] = 1.0;
  }
  return st;
}

MatrixD Standardizer::apply(const MatrixD& x) const {
  return (x - mean).cwiseQuotient(stddev);
}

}  // namespace pgcn::data
