// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pgcn/diff.hpp"
#include "pgcn/geometry.hpp"

namespace pgcn::model {

using diff::ParamSet;
using diff::Tape;
using diff::Var;

// Which feature stages run. Backbone and local are mutually exclusive.
struct Ablation {
  bool backbone = false;
  bool local = true;
  bool meso = true;
  bool global = true;

  bool operator==(const Ablation&) const = default;
};

// Named rows of the stage-ablation grid, in canonical order:
// baseline, global-only, local-only, meso-only, meso-removed,
// global-removed, local-removed, pgcn.
const std::vector<std::pair<std::string, Ablation>>& ablation_variants();
Ablation ablation_by_name(const std::string& name);

struct PgcnConfig {
  std::size_t n_electrodes = 62;
  std::size_t in_features = 5;
  std::size_t local_d1 = 10;
  std::size_t local_d2 = 15;
  std::size_t embed_dim = 30;
  std::size_t n_heads = 6;
  std::size_t global_out = 40;
  std::size_t global_layers = 1;
  std::size_t hidden1 = 512;
  std::size_t hidden2 = 64;
  std::size_t n_classes = 3;
  double sparsify_fraction = 0.2;
  double delta = 9.0;
  double leaky_slope = 0.2;
  // Partition names (from the partition file) used by the meso stage, in
  // virtual-node order.
  std::vector<std::string> meso_partitions = {"regions7", "hemispheres"};
  Ablation ablation;

  // Throws ConfigError on any violated invariant.
  void validate() const;

  // Width of the per-node features handed to the classifier.
  std::size_t node_width() const;
};

nlohmann::json to_json(const PgcnConfig& cfg);
PgcnConfig config_from_json(const nlohmann::json& j, PgcnConfig base = {});

// Per-stage values of one sample's forward pass. Stages that did not run
// are empty optionals / empty vectors.
template <typename T>
struct LayerTrace {
  Matrix<T> x;
  std::optional<Matrix<T>> h1, h2;
  Matrix<T> x_local;
  // Per partition, per region.
  std::vector<std::vector<Matrix<T>>> attention;  // e
  std::vector<std::vector<Matrix<T>>> lambda;     // n x 1
  std::vector<Matrix<T>> centers;                 // M^(p): regions x width
  std::vector<Matrix<T>> center_locations;        // P^(p): regions x 3
  std::optional<Matrix<T>> x_meso, p_meso;
  std::optional<Matrix<T>> x_enhanced;
  std::vector<Matrix<T>> heads;                   // G_k
  std::optional<Matrix<T>> a_global_dense, a_global;
  std::vector<Matrix<T>> global_layers;           // O^(1..)
  std::optional<Matrix<T>> x_global;
  Matrix<T> logits;                               // 1 x classes
};

// ---- stage operations ------------------------------------------------------

template <typename T>
struct LocalOut {
  Var<T> h1, h2, out;
};

// Two GCN layers over `laplacian` with a cross-layer concat of x, H1, H2.
template <typename T>
LocalOut<T> local_forward(Var<T> x, Var<T> laplacian, Var<T> w1, Var<T> w2);

// Same layers without the concat (backbone: output is H2).
template <typename T>
LocalOut<T> backbone_forward(Var<T> x, Var<T> laplacian, Var<T> w1, Var<T> w2);

template <typename T>
struct Attention {
  Var<T> e;       // N x N
  Var<T> lambda;  // N x 1 row sums of e
};

template <typename T>
Attention<T> meso_attention(Var<T> h, Var<T> w, T slope);

template <typename T>
struct VirtualCenter {
  Var<T> weights;   // 1 x N softmax of lambda
  Var<T> feature;   // 1 x F
  Var<T> location;  // 1 x 3
};

template <typename T>
VirtualCenter<T> virtual_center(Var<T> lambda, Var<T> h, Var<T> positions);

template <typename T>
struct MesoOut {
  Var<T> x_meso;
  Var<T> p_meso;
  std::vector<std::vector<Attention<T>>> attention;
  std::vector<Var<T>> centers, locations;
};

// Appends one virtual node per region of each partition, in order.
template <typename T>
MesoOut<T> meso_forward(Var<T> x_local, Var<T> positions,
                        std::span<const geometry::RegionPartition> partitions,
                        std::span<const Var<T>> weights, T slope);

template <typename T>
Var<T> position_enhance(Var<T> x_meso, Var<T> p_meso, Var<T> embed_w, Var<T> embed_b);

template <typename T>
struct GlobalAdjacency {
  std::vector<Var<T>> heads;  // row-stochastic G_k
  Var<T> dense;               // sum_k w_k G_k
  Var<T> sparse;              // after top-k
};

template <typename T>
GlobalAdjacency<T> global_adjacency(Var<T> x_enhanced, std::span<const Var<T>> queries,
                                    std::span<const Var<T>> keys, Var<T> mix, double fraction);

template <typename T>
struct GlobalOut {
  std::vector<Var<T>> layers;
  Var<T> out;
};

// Self-loops are added only if the adjacency diagonal is entirely zero.
template <typename T>
GlobalOut<T> global_forward(Var<T> x_meso, Var<T> a_global, std::span<const Var<T>> weights);

// Three affine layers with ReLU between them on B x F flattened features.
template <typename T>
Var<T> classify(Var<T> flat, std::span<const Var<T>> weights, std::span<const Var<T>> biases);

// ---- model -----------------------------------------------------------------

template <typename T>
class Pgcn {
 public:
  // `partitions` must contain every name listed in cfg.meso_partitions.
  // `neighbors` drives the backbone adjacency; empty selects grid
  // neighbours of the montage.
  Pgcn(PgcnConfig cfg, geometry::Montage montage, std::vector<geometry::RegionPartition> partitions,
       std::vector<std::vector<std::size_t>> neighbors = {});

  const PgcnConfig& config() const { return cfg_; }
  const geometry::Montage& montage() const { return montage_; }
  const std::vector<geometry::RegionPartition>& partitions() const { return partitions_; }
  std::size_t node_count() const;

  ParamSet<T> init_params(std::uint64_t seed) const;

  // B x n_classes logits for a batch of n_electrodes x in_features inputs.
  Var<T> forward(Tape<T>& tape, ParamSet<T>& params, std::span<const Matrix<T>> batch,
                 std::vector<LayerTrace<T>>* traces = nullptr) const;

  // Single-sample convenience returning logits and the trace.
  std::pair<Matrix<T>, LayerTrace<T>> run(ParamSet<T>& params, const Matrix<T>& x) const;

  // Symmetrised learnable adjacency (the matrix the local stage normalises).
  Matrix<T> learned_adjacency(const ParamSet<T>& params) const;

 private:
  PgcnConfig cfg_;
  geometry::Montage montage_;
  std::vector<geometry::RegionPartition> partitions_;  // only the ones in use
  Matrix<T> positions_;
  MatrixD init_adjacency_;
  Matrix<T> backbone_laplacian_;
};

// Stacked plain GCN layers H <- relu(L H W) over a fixed normalised
// adjacency, Glorot-initialised from `seed`. Returns every layer output.
std::vector<MatrixD> vanilla_gcn_layers(const MatrixD& x, const MatrixD& laplacian, std::size_t layers,
                                        std::size_t width, std::uint64_t seed);

// ---- checkpoint -------------------------------------------------------------

struct Checkpoint {
  PgcnConfig config;
  std::string montage_csv;
  std::string partitions_json;
  ParamSet<double> params;
};

// Binary layout, little-endian: magic "PGCNCKPT", u32 version, u64 length +
// JSON header (config, montage, partitions), u32 tensor count, then per
// tensor: u32 name length, name bytes, u64 rows, u64 cols, rows*cols f64
// values in row-major order.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace pgcn::model
