// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pgcn/cli.hpp"
#include "support/helpers.hpp"

namespace pgcn::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using testing::TempDir;

struct Outcome {
  int code;
  std::string out;
};

// Runs the installed binary with stderr folded into stdout.
Outcome shell(const std::string& args) {
  const std::string cmd = std::string(PGCN_CLI_BINARY) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) throw std::runtime_error("popen failed");
  std::string out;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe) != nullptr) out += buf.data();
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

// Small enough to train in a second or two.
const std::string kTinyData = "--synthetic long-range --subjects 1 --trials 6 --samples-per-trial 3";
const std::string kTiny = kTinyData + " --epochs 2 --batch-size 6";

// ---- exit codes ----------------------------------------------------------------

TEST(CliExit, HelpIsZero) {
  const auto r = shell("--help");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("gradcheck"), std::string::npos);
  EXPECT_EQ(shell("train --help").code, 0);
}

TEST(CliExit, UsageErrorsAreTwo) {
  EXPECT_EQ(shell("").code, 2);
  EXPECT_EQ(shell("frobnicate").code, 2);
  EXPECT_EQ(shell("train --no-such-flag").code, 2);
  EXPECT_EQ(shell("train --epochs many").code, 2);
  EXPECT_EQ(shell("gradcheck --stage nonsense").code, 2);
  const auto r = shell("eval --checkpoint /nonexistent/model.ckpt");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("UsageError"), std::string::npos);
}

TEST(CliExit, RuntimeErrorsAreOneWithErrorName) {
  TempDir dir;
  std::ofstream(dir / "bad.ckpt") << "not a checkpoint";
  const auto r = shell("diagnose --checkpoint " + (dir / "bad.ckpt").string() + " --out " + (dir / "d").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("FormatError"), std::string::npos) << r.out;

  const auto lr = shell("train " + kTiny + " --lr -1 --out " + (dir / "t").string());
  EXPECT_EQ(lr.code, 1);
  EXPECT_NE(lr.out.find("ConfigError"), std::string::npos) << lr.out;
}

// ---- configuration precedence -------------------------------------------------------

TEST(CliConfig, DefaultsThenFileThenFlags) {
  TempDir dir;
  const auto defaults = resolve({"train"});
  EXPECT_EQ(defaults.train.epochs, train::TrainConfig{}.epochs);
  EXPECT_EQ(defaults.output_dir.filename(), "train");

  const auto cfg = dir / "c.json";
  std::ofstream(cfg) << R"({"train": {"epochs": 7, "lr": 0.003}, "model": {"delta": 5.0}})";
  const auto from_file = resolve({"train", "--config", cfg.string()});
  EXPECT_EQ(from_file.train.epochs, 7u);
  EXPECT_EQ(from_file.train.lr, 0.003);
  EXPECT_EQ(from_file.model.delta, 5.0);

  const auto flagged = resolve({"train", "--config", cfg.string(), "--epochs", "3"});
  EXPECT_EQ(flagged.train.epochs, 3u);
  EXPECT_EQ(flagged.train.lr, 0.003);
}

TEST(CliConfig, OutputRootFromEnvironment) {
  ::setenv("PGCN_OUTPUT_ROOT", "/tmp/somewhere", 1);
  const auto c = resolve({"gradcheck"});
  ::unsetenv("PGCN_OUTPUT_ROOT");
  EXPECT_EQ(c.output_dir, fs::path("/tmp/somewhere/gradcheck"));
  EXPECT_EQ(resolve({"gradcheck", "--out", "x"}).output_dir, fs::path("x"));
}

TEST(CliConfig, MalformedConfigFileIsConfigError) {
  TempDir dir;
  std::ofstream(dir / "c.json") << "{ nope";
  EXPECT_THROW(resolve({"train", "--config", (dir / "c.json").string()}), ConfigError);
  std::ofstream(dir / "d.json") << R"({"train": {"epochs": "ten"}})";
  EXPECT_THROW(resolve({"train", "--config", (dir / "d.json").string()}), ConfigError);
}

// ---- commands end to end ----------------------------------------------------------------

class CliRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir;
    const auto r = shell("train " + kTiny + " --seed 7 --out " + (*dir_ / "train").string());
    ASSERT_EQ(r.code, 0) << r.out;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static TempDir* dir_;
};
TempDir* CliRun::dir_ = nullptr;

TEST_F(CliRun, TrainWritesArtifacts) {
  const auto out = *dir_ / "train";
  for (const char* f : {"report.json", "curves.csv", "model.ckpt", "run-config.json"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  const auto report = read_json(out / "report.json");
  EXPECT_TRUE(report.contains("mean_accuracy"));
  const auto rc = read_json(out / "run-config.json");
  EXPECT_EQ(rc["command"], "train");
  EXPECT_EQ(rc["train"]["seed"], 7);
  EXPECT_EQ(rc["data"]["synthetic"]["mode"], "long-range");
  EXPECT_EQ(rc["protocol"]["train_trials"], "1-4");
  const auto curves = slurp(out / "curves.csv");
  EXPECT_EQ(std::count(curves.begin(), curves.end(), '\n'), 3);
}

TEST_F(CliRun, RerunFromRunConfigReproducesReport) {
  const auto first = *dir_ / "train";
  auto rc = read_json(first / "run-config.json");
  rc["output_dir"] = (*dir_ / "rerun").string();
  std::ofstream(*dir_ / "rerun.json") << rc.dump();
  const auto r = shell("train --config " + (*dir_ / "rerun.json").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(slurp(first / "report.json"), slurp(*dir_ / "rerun" / "report.json"));
  EXPECT_EQ(slurp(first / "curves.csv"), slurp(*dir_ / "rerun" / "curves.csv"));
  EXPECT_EQ(slurp(first / "model.ckpt"), slurp(*dir_ / "rerun" / "model.ckpt"));
}

TEST_F(CliRun, EvalReproducesFinalTestAccuracy) {
  const auto out = *dir_ / "eval";
  const auto r = shell("eval " + kTinyData + " --seed 7 --checkpoint " + (*dir_ / "train" / "model.ckpt").string() +
                       " --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto e = read_json(out / "eval.json");
  const auto report = read_json(*dir_ / "train" / "report.json");
  EXPECT_EQ(e["test_accuracy"].get<double>(), report["folds"][0]["test_accuracy"].get<double>());
  EXPECT_EQ(e["all_samples"], 18);
  EXPECT_TRUE(fs::exists(out / "run-config.json"));
}

TEST_F(CliRun, DiagnoseWritesHeatmapTopKAndCurves) {
  const auto out = *dir_ / "diag";
  const auto r = shell("diagnose --top-k 10 --checkpoint " + (*dir_ / "train" / "model.ckpt").string() + " --out " +
                       out.string());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto top = slurp(out / "top_connections.csv");
  EXPECT_EQ(std::count(top.begin(), top.end(), '\n'), 11);
  const auto heat = slurp(out / "diagonal_heat.csv");
  EXPECT_EQ(std::count(heat.begin(), heat.end(), '\n'), 63);
  for (const char* f : {"smoothness.csv", "smoothness_all_nodes.csv", "smoothness_vanilla.csv", "run-config.json"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  // Rerun is byte-identical.
  const auto again = shell("diagnose --config " + (out / "run-config.json").string() + " --out " +
                           (*dir_ / "diag2").string());
  ASSERT_EQ(again.code, 0) << again.out;
  for (const char* f : {"top_connections.csv", "diagonal_heat.csv", "smoothness.csv", "smoothness_vanilla.csv"}) {
    EXPECT_EQ(slurp(out / f), slurp(*dir_ / "diag2" / f)) << f;
  }
}

TEST_F(CliRun, AblateWritesComparisonTable) {
  const auto out = *dir_ / "ablate";
  const auto r = shell("ablate " + kTiny + " --variants baseline,pgcn --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto table = slurp(out / "ablation.csv");
  EXPECT_EQ(table.substr(0, table.find('\n')), "variant,backbone,local,meso,global,mean_accuracy,std_accuracy");
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 3);
  EXPECT_TRUE(fs::exists(out / "baseline" / "report.json"));
  EXPECT_TRUE(fs::exists(out / "pgcn" / "report.json"));
  EXPECT_EQ(read_json(out / "ablation.json").size(), 2u);
}

TEST(CliGradcheck, PrintsPerStageAndExitsZero) {
  TempDir dir;
  const auto r = shell("gradcheck --stage all --precision f64 --out " + dir.path().string());
  EXPECT_EQ(r.code, 0) << r.out;
  for (const char* stage : {"local", "meso", "global", "classifier", "full"}) {
    EXPECT_NE(r.out.find(stage), std::string::npos) << stage;
  }
  const auto j = read_json(dir / "gradcheck.json");
  ASSERT_GE(j.size(), 5u);
  for (const auto& s : j) {
    EXPECT_LE(s["max_rel_error"].get<double>(), 1e-6) << s["stage"];
    EXPECT_TRUE(s["pass"].get<bool>());
  }
}

}  // namespace
}  // namespace pgcn::cli
