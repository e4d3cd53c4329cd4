// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "pgcn/data.hpp"
#include "pgcn/error.hpp"
#include "pgcn/model.hpp"
#include "pgcn/train.hpp"

namespace pgcn::cli {

// Bad flags or unusable paths; mapped to exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
  const char* name() const noexcept override { return "UsageError"; }
};

// Fully resolved configuration of one invocation. Serialises to the
// run-config.json written next to every run's artifacts; feeding that file
// back through --config reproduces the run.
struct CliConfig {
  std::string command;
  std::filesystem::path montage;
  std::filesystem::path partitions;
  std::filesystem::path output_dir;
  std::filesystem::path checkpoint;  // eval, diagnose

  // Data: a bundle directory, or the synthetic generator when empty.
  std::filesystem::path bundle;
  data::SynthSpec synthetic;
  std::uint64_t data_seed = 0;
  data::ProtocolSpec protocol;

  model::PgcnConfig model;
  train::TrainConfig train;

  std::string gradcheck_stage = "all";
  std::size_t top_k = 10;
  std::uint64_t input_seed = 0;
  std::vector<std::string> variants;  // ablate; empty means the full grid

  bool synthetic_data() const { return bundle.empty(); }

  // Throws UsageError for missing paths, ConfigError for bad values.
  void validate() const;
  nlohmann::json to_json() const;
};

// Resolves defaults < config file < flags for an argument vector (argv[0]
// excluded). Throws UsageError on a malformed command line.
CliConfig resolve(const std::vector<std::string>& args);

// Runs one command. Returns 0 on success, 1 on runtime failure (also a
// failed gradient check), 2 on usage errors. Diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

}  // namespace pgcn::cli
