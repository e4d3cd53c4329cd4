// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pgcn/diff.hpp"
#include "pgcn/geometry.hpp"
#include "pgcn/model.hpp"
#include "pgcn/train.hpp"

namespace pgcn::gradcheck {

// Eight electrodes on a ring of radius 3 with two partitions of two regions
// each (front/back and left/right).
geometry::Montage small_montage();
std::vector<geometry::RegionPartition> small_partitions(const geometry::Montage& m);
model::PgcnConfig small_config();

struct StageResult {
  std::string stage;
  diff::GradCheckResult result;
  double tolerance = 0.0;
  bool pass() const { return result.max_rel_error <= tolerance && result.checked > 0; }
};

// Stages: local, meso, global, classifier, full; "all" runs every one.
const std::vector<std::string>& stage_names();

// 1e-6 for 64-bit, 1e-4 for 32-bit.
double tolerance(train::Precision p);

std::vector<StageResult> run(const std::string& stage, train::Precision precision, std::uint64_t seed);

}  // namespace pgcn::gradcheck
