// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <istream>
#include <string>
#include <vector>

#include "pgcn/matrix.hpp"

namespace pgcn::geometry {

using Position = std::array<double, 3>;

struct Electrode {
  std::string name;
  Position position;
};

// Named electrodes in canonical node order. Construction validates names
// and coordinates; the object is immutable afterwards.
class Montage {
 public:
  explicit Montage(std::vector<Electrode> electrodes);

  std::size_t count() const { return electrodes_.size(); }
  const std::vector<Electrode>& electrodes() const { return electrodes_; }
  const Electrode& operator[](std::size_t i) const { return electrodes_[i]; }

  // Index of `name`, throws UnknownElectrode when absent.
  std::size_t index_of(const std::string& name) const;
  bool contains(const std::string& name) const;

  // count() x 3 matrix of positions.
  MatrixD positions() const;

  // Montage restricted to `indices`, in the given order.
  Montage subset(const std::vector<std::size_t>& indices) const;

 private:
  std::vector<Electrode> electrodes_;
};

// Parses `name,x,y,z` rows. A first row whose coordinates are not numeric is
// treated as a header. Blank lines and lines starting with '#' are skipped.
Montage parse_montage(std::istream& in);
Montage load_montage(const std::filesystem::path& path);
std::string montage_to_csv(const Montage& m);

// Symmetric, zero diagonal. Each pair is computed once and mirrored.
MatrixD pairwise_distances(const Montage& m);

struct Region {
  std::string name;
  std::vector<std::size_t> electrodes;  // montage indices, file order
  bool operator==(const Region&) const = default;
};

struct RegionPartition {
  std::string name;
  std::vector<Region> regions;

  std::size_t electrode_count() const;
  bool operator==(const RegionPartition&) const = default;
};

// Checks disjointness, full coverage and non-empty regions against `m`.
void validate_partition(const RegionPartition& p, const Montage& m);

// Partition file: JSON object, partition name -> region name -> electrode
// names. Key order in the file is preserved.
std::vector<RegionPartition> parse_partitions(const std::string& json_text, const Montage& m);
std::vector<RegionPartition> load_partitions(const std::filesystem::path& path, const Montage& m);
RegionPartition load_partition(const std::filesystem::path& path, const std::string& name,
                               const Montage& m);
std::string partitions_to_json(const std::vector<RegionPartition>& parts, const Montage& m);

// Neighbour sets of the electrode grid: two electrodes are neighbours when
// their distance is at most `radius`. A non-positive radius selects 1.25x
// the median nearest-neighbour distance, which on a regular cap links each
// electrode to its immediate grid neighbours and none of the diagonals.
std::vector<std::vector<std::size_t>> grid_neighbors(const Montage& m, double radius = 0.0);

}  // namespace pgcn::geometry
