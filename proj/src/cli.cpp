// SPDX-License-Identifier: Apache-2.0
#include "pgcn/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "pgcn/diagnostics.hpp"
#include "pgcn/geometry.hpp"
#include "pgcn/gradcheck.hpp"
#include "pgcn/graph.hpp"

namespace pgcn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kCommands = {"train", "eval", "gradcheck", "diagnose", "ablate"};

fs::path default_data_file(const char* name) { return fs::path(PGCN_DATA_DIR) / name; }

fs::path output_root() {
  if (const char* env = std::getenv("PGCN_OUTPUT_ROOT"); env != nullptr && *env != '\0') return env;
  return "runs";
}

std::string format_trial_set(const std::set<int>& s) {
  std::string out;
  for (auto it = s.begin(); it != s.end();) {
    int lo = *it, hi = lo;
    auto next = std::next(it);
    while (next != s.end() && *next == hi + 1) {
      hi = *next;
      ++next;
    }
    if (!out.empty()) out += ',';
    out += lo == hi ? std::to_string(lo) : std::to_string(lo) + "-" + std::to_string(hi);
    it = next;
  }
  return out;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// ---- flag table ----------------------------------------------------------------

enum class Kind { UInt, Real, Text, Switch, List };

struct Flag {
  const char* name;
  const char* pointer;  // JSON pointer into the layered configuration
  Kind kind;
  const char* help;
};

const Flag kOut{"--out", "/output_dir", Kind::Text, "output directory (default $PGCN_OUTPUT_ROOT/<command>)"};
const Flag kSeed{"--seed", "/train/seed", Kind::UInt, "seed for parameter init and shuffling"};
const Flag kPrecision{"--precision", "/train/precision", Kind::Text, "f64 or f32"};
const Flag kCheckpoint{"--checkpoint", "/checkpoint", Kind::Text, "checkpoint file"};

const std::vector<Flag> kGeometryFlags = {
    {"--montage", "/montage", Kind::Text, "electrode montage CSV"},
    {"--partitions", "/partitions", Kind::Text, "region partition JSON"},
};

const std::vector<Flag> kDataFlags = {
    {"--bundle", "/data/bundle", Kind::Text, "dataset bundle directory"},
    {"--synthetic", "/data/synthetic/mode", Kind::Text, "synthetic task: local or long-range"},
    {"--subjects", "/data/synthetic/n_subjects", Kind::UInt, "synthetic subjects"},
    {"--sessions", "/data/synthetic/n_sessions", Kind::UInt, "synthetic sessions per subject"},
    {"--trials", "/data/synthetic/n_trials", Kind::UInt, "synthetic trials per session"},
    {"--samples-per-trial", "/data/synthetic/samples_per_trial", Kind::UInt, "synthetic samples per trial"},
    {"--classes", "/data/synthetic/n_classes", Kind::UInt, "synthetic classes"},
    {"--noise-sd", "/data/synthetic/noise_sd", Kind::Real, "synthetic noise standard deviation"},
    {"--data-seed", "/data/seed", Kind::UInt, "synthetic generator seed (default: --seed)"},
    {"--protocol", "/protocol/name", Kind::Text, "subject-dependent, last-per-class or loso"},
    {"--train-trials", "/protocol/train_trials", Kind::Text, "training trials, e.g. 1-9"},
    {"--test-trials", "/protocol/test_trials", Kind::Text, "test trials, e.g. 10-15"},
    {"--per-class", "/protocol/per_class", Kind::UInt, "held-out trials per class (last-per-class)"},
};

const std::vector<Flag> kTrainFlags = {
    {"--epochs", "/train/epochs", Kind::UInt, "training epochs"},
    {"--lr", "/train/lr", Kind::Real, "peak learning rate"},
    {"--batch-size", "/train/batch_size", Kind::UInt, "mini-batch size"},
    {"--warmup", "/train/warmup_fraction", Kind::Real, "warm-up fraction of total steps"},
    {"--weight-decay", "/train/weight_decay", Kind::Real, "decoupled weight decay"},
    {"--standardize", "/train/standardize", Kind::Switch, "z-score features with training statistics"},
    {"--fraction", "/model/sparsify_fraction", Kind::Real, "global adjacency keep fraction"},
    {"--delta", "/model/delta", Kind::Real, "distance scale of the initial adjacency"},
};

// Collected raw flag values of one subcommand.
struct Bound {
  Flag flag;
  CLI::Option* option;
  std::string value;
};

class Command {
 public:
  Command(CLI::App& app, const std::string& name, const std::string& help) : sub_(app.add_subcommand(name, help)) {
    sub_->add_option("--config", config_path_, "JSON configuration file")->check(CLI::ExistingFile);
  }

  Command& add(const Flag& f) {
    // deque keeps element addresses stable for CLI11's bindings
    auto& b = bound_.emplace_back(Bound{f, nullptr, {}});
    if (f.kind == Kind::Switch) {
      b.option = sub_->add_flag(f.name, f.help);
    } else {
      b.option = sub_->add_option(f.name, b.value, f.help);
      if (f.kind == Kind::UInt) b.option->check(CLI::NonNegativeNumber);
      if (f.kind == Kind::Real) b.option->check(CLI::Number);
    }
    return *this;
  }
  Command& add(const std::vector<Flag>& fs) {
    for (const auto& f : fs) add(f);
    return *this;
  }

  CLI::App* app() const { return sub_; }
  const std::string& config_path() const { return config_path_; }

  // Flags given on the command line, as a JSON patch.
  json flag_layer() const {
    json layer = json::object();
    for (const auto& b : bound_) {
      if (b.option->count() == 0) continue;
      const json::json_pointer ptr(b.flag.pointer);
      switch (b.flag.kind) {
        case Kind::UInt: layer[ptr] = std::stoull(b.value); break;
        case Kind::Real: layer[ptr] = std::stod(b.value); break;
        case Kind::Text: layer[ptr] = b.value; break;
        case Kind::Switch: layer[ptr] = true; break;
        case Kind::List: layer[ptr] = split_list(b.value); break;
      }
    }
    return layer;
  }

 private:
  CLI::App* sub_;
  std::string config_path_;
  std::deque<Bound> bound_;
};

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
}

template <typename V>
V value_at(const json& layer, const char* pointer, V fallback) {
  const json::json_pointer ptr(pointer);
  if (!layer.contains(ptr)) return fallback;
  try {
    return layer.at(ptr).get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(pointer) + ": " + e.what());
  }
}

json object_at(const json& layer, const char* pointer) {
  const json::json_pointer ptr(pointer);
  return layer.contains(ptr) ? layer.at(ptr) : json::object();
}

// Turns the merged file+flag layer into a complete configuration.
CliConfig resolve_layer(const std::string& command, const json& layer) {
  CliConfig c;
  c.command = command;
  c.montage = value_at<std::string>(layer, "/montage", default_data_file("montage_62.csv").string());
  c.partitions = value_at<std::string>(layer, "/partitions", default_data_file("partitions_62.json").string());
  c.output_dir = value_at<std::string>(layer, "/output_dir", (output_root() / command).string());
  c.checkpoint = value_at<std::string>(layer, "/checkpoint", "");

  c.train = train::train_config_from_json(object_at(layer, "/train"));
  c.model = model::config_from_json(object_at(layer, "/model"));

  c.bundle = value_at<std::string>(layer, "/data/bundle", "");
  c.data_seed = value_at<std::uint64_t>(layer, "/data/seed", c.train.seed);
  const json synth = object_at(layer, "/data/synthetic");
  const auto mode = data::synth_mode_from_string(synth.value("mode", std::string("long-range")));
  if (command == "train" || command == "eval" || command == "ablate") {
    if (!c.montage.empty() && fs::exists(c.montage)) {
      c.synthetic = data::synth_spec_from_json(synth, data::default_synth_spec(geometry::load_montage(c.montage), mode));
    } else {
      c.synthetic = data::synth_spec_from_json(synth, data::SynthSpec{});
    }
  }

  c.protocol.protocol = data::protocol_from_string(value_at<std::string>(layer, "/protocol/name", "subject-dependent"));
  c.protocol.per_class = value_at<std::size_t>(layer, "/protocol/per_class", 2);
  if (const auto t = value_at<std::string>(layer, "/protocol/train_trials", ""); !t.empty()) {
    c.protocol.train_trials = data::parse_trial_set(t);
  }
  if (const auto t = value_at<std::string>(layer, "/protocol/test_trials", ""); !t.empty()) {
    c.protocol.test_trials = data::parse_trial_set(t);
  }

  c.gradcheck_stage = value_at<std::string>(layer, "/gradcheck/stage", "all");
  c.top_k = value_at<std::size_t>(layer, "/diagnose/top_k", 10);
  c.input_seed = value_at<std::uint64_t>(layer, "/diagnose/input_seed", 0);
  c.variants = value_at<std::vector<std::string>>(layer, "/ablate/variants", {});
  return c;
}

// ---- command helpers -----------------------------------------------------------

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

struct Loaded {
  geometry::Montage montage;
  std::vector<geometry::RegionPartition> partitions;
  data::Dataset dataset;
  std::vector<data::Split> folds;
};

// Loads geometry and data, and pins every data-dependent setting into `c` so
// the written run-config is complete.
Loaded load_inputs(CliConfig& c) {
  Loaded l{geometry::load_montage(c.montage), {}, {}, {}};
  l.partitions = geometry::load_partitions(c.partitions, l.montage);
  if (c.synthetic_data()) {
    c.synthetic.n_electrodes = l.montage.count();
    l.dataset = data::synth_generate(c.synthetic, c.data_seed);
  } else {
    l.dataset = data::load_bundle(c.bundle);
  }
  if (l.dataset.n_electrodes != l.montage.count()) {
    throw ConfigError("dataset has " + std::to_string(l.dataset.n_electrodes) + " electrodes, montage has " +
                      std::to_string(l.montage.count()));
  }
  c.model.n_electrodes = l.montage.count();
  c.model.in_features = l.dataset.n_bands;
  c.model.n_classes = l.dataset.n_classes;

  if (c.protocol.protocol == data::Protocol::SubjectDependent &&
      (c.protocol.train_trials.empty() || c.protocol.test_trials.empty())) {
    // First 60% of the trial ids train, the rest test (9/6 for 15 trials).
    std::set<int> ids;
    for (const auto& s : l.dataset.samples) ids.insert(s.trial);
    const auto n_train = static_cast<std::size_t>(std::lround(0.6 * static_cast<double>(ids.size())));
    std::size_t i = 0;
    for (int id : ids) (i++ < n_train ? c.protocol.train_trials : c.protocol.test_trials).insert(id);
  }
  l.folds = data::make_folds(l.dataset, c.protocol);
  return l;
}

void prepare_output(const CliConfig& c) {
  fs::create_directories(c.output_dir);
  write_json(c.output_dir / "run-config.json", c.to_json());
}

struct TrainResult {
  train::Report report;
  std::vector<diff::ParamSet<double>> params;
};

TrainResult train_model(const CliConfig& c, const Loaded& l, const model::PgcnConfig& mc) {
  if (c.train.precision == train::Precision::F64) {
    const model::Pgcn<double> net(mc, l.montage, l.partitions);
    auto fit = train::fit(net, l.dataset, l.folds, c.train);
    return {std::move(fit.report), std::move(fit.params)};
  }
  const model::Pgcn<float> net(mc, l.montage, l.partitions);
  auto fit = train::fit(net, l.dataset, l.folds, c.train);
  TrainResult r{std::move(fit.report), {}};
  for (auto& p : fit.params) r.params.push_back(p.cast<double>());
  return r;
}

std::vector<geometry::RegionPartition> used_partitions(const model::PgcnConfig& mc,
                                                       const std::vector<geometry::RegionPartition>& all) {
  std::vector<geometry::RegionPartition> out;
  for (const auto& name : mc.meso_partitions) {
    auto it = std::find_if(all.begin(), all.end(), [&](const auto& p) { return p.name == name; });
    if (it == all.end()) throw InvalidPartition("partition file has no partition named " + name);
    out.push_back(*it);
  }
  return out;
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(precision) << v;
  return ss.str();
}

// ---- commands ------------------------------------------------------------------

int cmd_train(CliConfig c, std::ostream& out) {
  auto l = load_inputs(c);
  c.model.validate();
  prepare_output(c);
  auto result = train_model(c, l, c.model);
  write_json(c.output_dir / "report.json", result.report.to_json());
  write_text(c.output_dir / "curves.csv", result.report.epochs_csv());

  const auto parts = used_partitions(c.model, l.partitions);
  for (std::size_t f = 0; f < result.params.size(); ++f) {
    model::Checkpoint ck{c.model, geometry::montage_to_csv(l.montage), geometry::partitions_to_json(parts, l.montage),
                         result.params[f]};
    if (c.train.standardize) {
      const auto scaler = data::Standardizer::fit(l.dataset, l.folds[f].train);
      ck.params.add("scaler.mean", scaler.mean);
      ck.params.add("scaler.std", scaler.stddev);
    }
    const auto name = f == 0 ? std::string("model.ckpt") : "model-" + l.folds[f].name + ".ckpt";
    model::save_checkpoint(c.output_dir / name, ck);
  }
  out << "folds " << result.report.folds.size() << "  mean test accuracy " << fmt(result.report.mean_accuracy)
      << " +/- " << fmt(result.report.std_accuracy) << "\n"
      << "wrote " << c.output_dir.string() << "\n";
  return 0;
}

int cmd_eval(CliConfig c, std::ostream& out) {
  const auto ck = model::load_checkpoint(c.checkpoint);
  auto l = load_inputs(c);
  c.model = ck.config;
  prepare_output(c);
  std::istringstream montage_csv(ck.montage_csv);
  const auto montage = geometry::parse_montage(montage_csv);
  const auto parts = geometry::parse_partitions(ck.partitions_json, montage);
  if (montage.count() != l.montage.count() || ck.config.in_features != l.dataset.n_bands) {
    throw ConfigError("checkpoint shape does not match the dataset");
  }
  const model::Pgcn<double> net(ck.config, montage, parts);
  auto params = ck.params;
  std::optional<data::Standardizer> scaler;
  if (params.contains("scaler.mean")) scaler = data::Standardizer{params["scaler.mean"].value, params["scaler.std"].value};

  std::vector<std::size_t> test;
  for (const auto& fold : l.folds) test.insert(test.end(), fold.test.begin(), fold.test.end());
  std::vector<std::size_t> all(l.dataset.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto* sc = scaler ? &*scaler : nullptr;
  const double acc_test = train::evaluate(net, params, l.dataset, test, sc);
  const double acc_all = train::evaluate(net, params, l.dataset, all, sc);
  write_json(c.output_dir / "eval.json", {{"test_accuracy", acc_test},
                                          {"test_samples", test.size()},
                                          {"all_accuracy", acc_all},
                                          {"all_samples", all.size()}});
  out << "test accuracy " << fmt(acc_test) << " (" << test.size() << " samples)  all " << fmt(acc_all) << " ("
      << all.size() << " samples)\n";
  return 0;
}

int cmd_gradcheck(const CliConfig& c, std::ostream& out) {
  prepare_output(c);
  const auto results = gradcheck::run(c.gradcheck_stage, c.train.precision, c.train.seed);
  bool ok = true;
  json j = json::array();
  for (const auto& r : results) {
    ok = ok && r.pass();
    out << std::left << std::setw(11) << r.stage << " max_rel_error " << std::scientific << std::setprecision(3)
        << r.result.max_rel_error << std::defaultfloat << "  checked " << r.result.checked << "  skipped "
        << r.result.skipped << "  " << (r.pass() ? "ok" : "FAIL") << "\n";
    j.push_back({{"stage", r.stage},
                 {"max_rel_error", r.result.max_rel_error},
                 {"checked", r.result.checked},
                 {"skipped", r.result.skipped},
                 {"worst_param", r.result.worst_param},
                 {"tolerance", r.tolerance},
                 {"pass", r.pass()}});
  }
  write_json(c.output_dir / "gradcheck.json", j);
  return ok ? 0 : 1;
}

int cmd_diagnose(CliConfig c, std::ostream& out) {
  const auto ck = model::load_checkpoint(c.checkpoint);
  c.model = ck.config;
  prepare_output(c);
  std::istringstream montage_csv(ck.montage_csv);
  const auto montage = geometry::parse_montage(montage_csv);
  const auto parts = geometry::parse_partitions(ck.partitions_json, montage);
  const model::Pgcn<double> net(ck.config, montage, parts);
  auto params = ck.params;

  if (!params.contains("local.A")) throw ConfigError("checkpoint has no learned adjacency (local stage disabled)");
  const auto report = diagnostics::export_adjacency(net.learned_adjacency(params), montage, c.top_k);
  write_text(c.output_dir / "diagonal_heat.csv", report.diagonal_csv());
  write_text(c.output_dir / "top_connections.csv", report.connections_csv());

  std::mt19937_64 rng(c.input_seed);
  std::normal_distribution<double> nd;
  MatrixD x(static_cast<Eigen::Index>(ck.config.n_electrodes), static_cast<Eigen::Index>(ck.config.in_features));
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = nd(rng);
  const auto trace = net.run(params, x).second;
  const auto n = ck.config.n_electrodes;
  write_text(c.output_dir / "smoothness.csv",
             diagnostics::smoothness_curve(trace, diagnostics::Scope::ElectrodesOnly, n).to_csv());
  write_text(c.output_dir / "smoothness_all_nodes.csv",
             diagnostics::smoothness_curve(trace, diagnostics::Scope::AllNodes, n).to_csv());
  const MatrixD lap = graph::sym_normalize<double>(
      graph::init_distance_adjacency(geometry::pairwise_distances(montage), ck.config.delta), false);
  write_text(c.output_dir / "smoothness_vanilla.csv",
             diagnostics::vanilla_smoothness_curve(x, lap, 5, ck.config.embed_dim, c.input_seed).to_csv());

  out << "top " << report.top.size() << " connections\n";
  for (const auto& conn : report.top) {
    out << "  " << conn.rank << ". " << conn.from << " - " << conn.to << "  " << fmt(conn.weight) << "\n";
  }
  out << "wrote " << c.output_dir.string() << "\n";
  return 0;
}

int cmd_ablate(CliConfig c, std::ostream& out) {
  auto l = load_inputs(c);
  std::vector<std::pair<std::string, model::Ablation>> grid;
  if (c.variants.empty()) {
    grid = model::ablation_variants();
  } else {
    for (const auto& v : c.variants) grid.emplace_back(v, model::ablation_by_name(v));
  }
  prepare_output(c);
  std::ostringstream table;
  table << "variant,backbone,local,meso,global,mean_accuracy,std_accuracy\n";
  json summary = json::array();
  for (const auto& [name, abl] : grid) {
    auto mc = c.model;
    mc.ablation = abl;
    mc.validate();
    const auto result = train_model(c, l, mc);
    const auto dir = c.output_dir / name;
    fs::create_directories(dir);
    write_json(dir / "report.json", result.report.to_json());
    write_text(dir / "curves.csv", result.report.epochs_csv());
    table << name << ',' << abl.backbone << ',' << abl.local << ',' << abl.meso << ',' << abl.global << ','
          << fmt(result.report.mean_accuracy, 6) << ',' << fmt(result.report.std_accuracy, 6) << "\n";
    summary.push_back({{"variant", name},
                       {"mean_accuracy", result.report.mean_accuracy},
                       {"std_accuracy", result.report.std_accuracy}});
    out << std::left << std::setw(16) << name << fmt(100.0 * result.report.mean_accuracy, 2) << " +/- "
        << fmt(100.0 * result.report.std_accuracy, 2) << "\n";
  }
  write_text(c.output_dir / "ablation.csv", table.str());
  write_json(c.output_dir / "ablation.json", summary);
  return 0;
}

}  // namespace

// ---- CliConfig -----------------------------------------------------------------

void CliConfig::validate() const {
  if (std::find(kCommands.begin(), kCommands.end(), command) == kCommands.end()) {
    throw UsageError("unknown command " + command);
  }
  auto need_file = [](const fs::path& p, const char* what) {
    if (p.empty() || !fs::exists(p)) throw UsageError(std::string(what) + " not found: " + p.string());
  };
  if (command != "gradcheck") {
    if (command == "eval" || command == "diagnose") need_file(checkpoint, "checkpoint");
  }
  if (command == "train" || command == "eval" || command == "ablate") {
    need_file(montage, "montage");
    need_file(partitions, "partition file");
    if (!synthetic_data()) need_file(bundle / "manifest.json", "bundle manifest");
  }
  if (command == "gradcheck") {
    const auto& names = gradcheck::stage_names();
    if (gradcheck_stage != "all" && std::find(names.begin(), names.end(), gradcheck_stage) == names.end()) {
      throw UsageError("unknown stage " + gradcheck_stage);
    }
  }
  if (command == "diagnose" && top_k == 0) throw UsageError("--top-k must be at least 1");
  train.validate();
}

json CliConfig::to_json() const {
  json j = {
      {"command", command},
      {"montage", montage.string()},
      {"partitions", partitions.string()},
      {"output_dir", output_dir.string()},
      {"model", model::to_json(model)},
      {"train", train::to_json(train)},
  };
  if (!checkpoint.empty()) j["checkpoint"] = checkpoint.string();
  if (command == "train" || command == "eval" || command == "ablate") {
    json d = {{"seed", data_seed}};
    if (synthetic_data()) {
      d["synthetic"] = data::to_json(synthetic);
    } else {
      d["bundle"] = bundle.string();
    }
    j["data"] = d;
    j["protocol"] = {{"name", data::to_string(protocol.protocol)},
                     {"train_trials", format_trial_set(protocol.train_trials)},
                     {"test_trials", format_trial_set(protocol.test_trials)},
                     {"per_class", protocol.per_class}};
  }
  if (command == "gradcheck") j["gradcheck"] = {{"stage", gradcheck_stage}};
  if (command == "diagnose") j["diagnose"] = {{"top_k", top_k}, {"input_seed", input_seed}};
  if (command == "ablate") j["ablate"] = {{"variants", variants}};
  return j;
}

// ---- entry points --------------------------------------------------------------

namespace {

struct Parser {
  CLI::App app{"Trainable graph network for electrode-feature classification", "pgcn"};
  std::vector<std::unique_ptr<Command>> commands;

  Parser() {
    app.require_subcommand(1);
    auto& train = make("train", "train one model per protocol fold");
    train.add(kOut).add(kSeed).add(kPrecision).add(kGeometryFlags).add(kDataFlags).add(kTrainFlags);
    train.add({"--variant", "/model/ablation", Kind::Text, "ablation variant name (default pgcn)"});

    auto& eval = make("eval", "evaluate a checkpoint on a dataset");
    eval.add(kOut).add(kCheckpoint).add(kGeometryFlags).add(kDataFlags).add(kSeed);

    auto& gc = make("gradcheck", "finite-difference gradient check on a small model");
    gc.add(kOut).add(kSeed).add(kPrecision);
    gc.add({"--stage", "/gradcheck/stage", Kind::Text, "local, meso, global, classifier, full or all"});

    auto& diag = make("diagnose", "export learned adjacency and smoothness curves");
    diag.add(kOut).add(kCheckpoint);
    diag.add({"--top-k", "/diagnose/top_k", Kind::UInt, "number of strongest connections"});
    diag.add({"--input-seed", "/diagnose/input_seed", Kind::UInt, "seed of the random probe input"});

    auto& abl = make("ablate", "train every stage-ablation variant and compare");
    abl.add(kOut).add(kSeed).add(kPrecision).add(kGeometryFlags).add(kDataFlags).add(kTrainFlags);
    abl.add({"--variants", "/ablate/variants", Kind::List, "comma-separated subset of variants"});
  }

  Command& make(const std::string& name, const std::string& help) {
    commands.push_back(std::make_unique<Command>(app, name, help));
    return *commands.back();
  }
};

}  // namespace

CliConfig resolve(const std::vector<std::string>& args) {
  Parser p;
  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    p.app.parse(rev);
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }
  for (const auto& cmd : p.commands) {
    if (!cmd->app()->parsed()) continue;
    json layer = cmd->config_path().empty() ? json::object() : read_json_file(cmd->config_path());
    if (!layer.is_object()) throw ConfigError("config file must hold a JSON object");
    layer.erase("command");
    layer.merge_patch(cmd->flag_layer());
    return resolve_layer(cmd->app()->get_name(), layer);
  }
  throw UsageError("a command is required");
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  {
    Parser p;
    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
      p.app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
      const auto sub = std::find_if(p.commands.begin(), p.commands.end(),
                                    [](const auto& cmd) { return cmd->app()->parsed(); });
      out << (sub == p.commands.end() ? p.app.help() : (*sub)->app()->help());
      return 0;
    } catch (const CLI::ParseError& e) {
      err << "error: UsageError: " << e.what() << "\n" << p.app.help();
      return 2;
    }
  }
  try {
    auto cfg = resolve(args);
    cfg.validate();
    if (cfg.command == "train") return cmd_train(std::move(cfg), out);
    if (cfg.command == "eval") return cmd_eval(std::move(cfg), out);
    if (cfg.command == "gradcheck") return cmd_gradcheck(cfg, out);
    if (cfg.command == "diagnose") return cmd_diagnose(std::move(cfg), out);
    return cmd_ablate(std::move(cfg), out);
  } catch (const UsageError& e) {
    err << "error: " << e.name() << ": " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.name() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace pgcn::cli
