// SPDX-License-Identifier: Apache-2.0
#include "pgcn/geometry.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "pgcn/error.hpp"

namespace pgcn::geometry {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

bool parse_double(const std::string& s, double& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Montage::Montage(std::vector<Electrode> electrodes) : electrodes_(std::move(electrodes)) {
  if (electrodes_.empty()) throw EmptyMontage("montage has no electrodes");
  std::unordered_set<std::string> seen;
  for (const auto& e : electrodes_) {
    if (e.name.empty()) throw ParseError("empty electrode name");
    if (!seen.insert(e.name).second) throw DuplicateElectrode("duplicate electrode " + e.name);
    for (double c : e.position) {
      if (!std::isfinite(c)) throw ParseError("non-finite coordinate for " + e.name);
    }
  }
}

std::size_t Montage::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < electrodes_.size(); ++i) {
    if (electrodes_[i].name == name) return i;
  }
  throw UnknownElectrode("unknown electrode " + name);
}

bool Montage::contains(const std::string& name) const {
  return std::any_of(electrodes_.begin(), electrodes_.end(),
                     [&](const Electrode& e) { return e.name == name; });
}

MatrixD Montage::positions() const {
  MatrixD p(static_cast<Eigen::Index>(count()), 3);
  for (std::size_t i = 0; i < count(); ++i) {
    for (int k = 0; k < 3; ++k) p(static_cast<Eigen::Index>(i), k) = electrodes_[i].position[k];
  }
  return p;
}

Montage Montage::subset(const std::vector<std::size_t>& indices) const {
  std::vector<Electrode> out;
  out.reserve(indices.size());
  for (auto i : indices) {
    if (i >= count()) throw IndexError("electrode index out of range");
    out.push_back(electrodes_[i]);
  }
  return Montage(std::move(out));
}

Montage parse_montage(std::istream& in) {
  std::vector<Electrode> rows;
  std::string line;
  std::size_t line_no = 0;
  bool first_data_row = true;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(t);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(trim(f));
    if (fields.size() != 4) {
      throw ParseError("line " + std::to_string(line_no) + ": expected name,x,y,z");
    }
    Electrode e{fields[0], {}};
    bool numeric = true;
    for (int k = 0; k < 3; ++k) numeric = parse_double(fields[1 + k], e.position[k]) && numeric;
    if (!numeric) {
      if (first_data_row) {  // header
        first_data_row = false;
        continue;
      }
      throw ParseError("line " + std::to_string(line_no) + ": bad coordinate");
    }
    first_data_row = false;
    for (double c : e.position) {
      if (!std::isfinite(c)) {
        throw ParseError("line " + std::to_string(line_no) + ": non-finite coordinate");
      }
    }
    rows.push_back(std::move(e));
  }
  if (rows.empty()) throw EmptyMontage("montage file has no electrode rows");
  return Montage(std::move(rows));
}

Montage load_montage(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return parse_montage(in);
}

std::string montage_to_csv(const Montage& m) {
  std::ostringstream out;
  out.precision(17);
  out << "name,x,y,z\n";
  for (const auto& e : m.electrodes()) {
    out << e.name << ',' << e.position[0] << ',' << e.position[1] << ',' << e.position[2] << '\n';
  }
  return out.str();
}

MatrixD pairwise_distances(const Montage& m) {
  const auto n = static_cast<Eigen::Index>(m.count());
  MatrixD d = MatrixD::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& a = m[static_cast<std::size_t>(i)].position;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const auto& b = m[static_cast<std::size_t>(j)].position;
      const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
      const double v = std::sqrt(dx * dx + dy * dy + dz * dz);
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

std::size_t RegionPartition::electrode_count() const {
  std::size_t n = 0;
  for (const auto& r : regions) n += r.electrodes.size();
  return n;
}

void validate_partition(const RegionPartition& p, const Montage& m) {
  if (p.regions.empty()) throw InvalidPartition("partition " + p.name + " has no regions");
  std::vector<int> hits(m.count(), 0);
  for (const auto& r : p.regions) {
    if (r.electrodes.empty()) {
      throw InvalidPartition("region " + p.name + "/" + r.name + " is empty");
    }
    for (auto i : r.electrodes) {
      if (i >= m.count()) throw InvalidPartition("region " + r.name + " index out of range");
      if (++hits[i] > 1) {
        throw InvalidPartition("electrode " + m[i].name + " appears twice in " + p.name);
      }
    }
  }
  for (std::size_t i = 0; i < hits.size(); ++i) {
    if (hits[i] == 0) throw InvalidPartition("electrode " + m[i].name + " missing from " + p.name);
  }
}

std::vector<RegionPartition> parse_partitions(const std::string& json_text, const Montage& m) {
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("partition file: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("partition file must be a JSON object");
  std::vector<RegionPartition> out;
  for (const auto& [pname, regions] : doc.items()) {
    if (!regions.is_object()) throw ParseError("partition " + pname + " must map regions");
    RegionPartition p{pname, {}};
    for (const auto& [rname, names] : regions.items()) {
      if (!names.is_array()) throw ParseError("region " + rname + " must list electrodes");
      Region r{rname, {}};
      for (const auto& n : names) {
        if (!n.is_string()) throw ParseError("region " + rname + ": electrode names are strings");
        r.electrodes.push_back(m.index_of(n.get<std::string>()));
      }
      p.regions.push_back(std::move(r));
    }
    validate_partition(p, m);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<RegionPartition> load_partitions(const std::filesystem::path& path, const Montage& m) {
  return parse_partitions(read_file(path), m);
}

RegionPartition load_partition(const std::filesystem::path& path, const std::string& name,
                               const Montage& m) {
  for (auto& p : load_partitions(path, m)) {
    if (p.name == name) return p;
  }
  throw InvalidPartition("no partition named " + name + " in " + path.string());
}

std::string partitions_to_json(const std::vector<RegionPartition>& parts, const Montage& m) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::object();
  for (const auto& p : parts) {
    nlohmann::ordered_json regions = nlohmann::ordered_json::object();
    for (const auto& r : p.regions) {
      auto names = nlohmann::ordered_json::array();
      for (auto i : r.electrodes) names.push_back(m[i].name);
      regions[r.name] = std::move(names);
    }
    doc[p.name] = std::move(regions);
  }
  return doc.dump(2);
}

std::vector<std::vector<std::size_t>> grid_neighbors(const Montage& m, double radius) {
  const std::size_t n = m.count();
  auto dist = [&](std::size_t i, std::size_t j) {
    const auto& p = m[i].position;
    const auto& q = m[j].position;
    return std::sqrt((p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]) + (p[2] - q[2]) * (p[2] - q[2]));
  };
  if (radius <= 0.0) {
    std::vector<double> nearest;
    for (std::size_t i = 0; i < n; ++i) {
      double best = INFINITY;
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i) best = std::min(best, dist(i, j));
      }
      if (std::isfinite(best)) nearest.push_back(best);
    }
    if (nearest.empty()) return std::vector<std::vector<std::size_t>>(n);
    std::nth_element(nearest.begin(), nearest.begin() + nearest.size() / 2, nearest.end());
    radius = 1.25 * nearest[nearest.size() / 2];
  }
  std::vector<std::vector<std::size_t>> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i && dist(i, j) <= radius) out[i].push_back(j);
    }
  }
  return out;
}

}  // namespace pgcn::geometry
