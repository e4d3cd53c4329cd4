// SPDX-License-Identifier: Apache-2.0
#include "pgcn/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <iterator>
#include <sstream>
#include <string_view>

#include "pgcn/error.hpp"
#include "pgcn/graph.hpp"

namespace pgcn::model {

// ---- ablation grid -----------------------------------------------------------

const std::vector<std::pair<std::string, Ablation>>& ablation_variants() {
  static const std::vector<std::pair<std::string, Ablation>> grid = {
      {"baseline", {true, false, false, false}},
      {"global-only", {true, false, false, true}},
      {"local-only", {false, true, false, false}},
      {"meso-only", {true, false, true, false}},
      {"meso-removed", {false, true, false, true}},
      {"global-removed", {false, true, true, false}},
      {"local-removed", {true, false, true, true}},
      {"pgcn", {false, true, true, true}},
  };
  return grid;
}

Ablation ablation_by_name(const std::string& name) {
  for (const auto& [n, a] : ablation_variants()) {
    if (n == name) return a;
  }
  throw ConfigError("unknown ablation variant " + name);
}

// ---- config ------------------------------------------------------------------

void PgcnConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (n_electrodes == 0 || in_features == 0) fail("electrode and feature counts must be positive");
  if (local_d1 == 0 || local_d2 == 0) fail("local widths must be positive");
  if (in_features + local_d1 + local_d2 != embed_dim) {
    fail("in_features + local_d1 + local_d2 must equal embed_dim");
  }
  if (n_heads == 0 || embed_dim % n_heads != 0) fail("n_heads must divide embed_dim");
  if (global_out == 0 || global_layers == 0) fail("global stage needs positive width and depth");
  if (hidden1 == 0 || hidden2 == 0) fail("classifier hidden sizes must be positive");
  if (n_classes < 2) fail("n_classes must be at least 2");
  if (!(sparsify_fraction > 0.0 && sparsify_fraction <= 1.0)) fail("sparsify_fraction must be in (0, 1]");
  if (!(delta > 0.0)) fail("delta must be positive");
  if (ablation.backbone == ablation.local) fail("exactly one of backbone and local must be enabled");
  if (ablation.meso && meso_partitions.empty()) fail("meso stage enabled without partitions");
}

std::size_t PgcnConfig::node_width() const {
  return ablation.global ? embed_dim + global_out : embed_dim;
}

nlohmann::json to_json(const PgcnConfig& c) {
  return {
      {"n_electrodes", c.n_electrodes},
      {"in_features", c.in_features},
      {"local_d1", c.local_d1},
      {"local_d2", c.local_d2},
      {"embed_dim", c.embed_dim},
      {"n_heads", c.n_heads},
      {"global_out", c.global_out},
      {"global_layers", c.global_layers},
      {"hidden1", c.hidden1},
      {"hidden2", c.hidden2},
      {"n_classes", c.n_classes},
      {"sparsify_fraction", c.sparsify_fraction},
      {"delta", c.delta},
      {"leaky_slope", c.leaky_slope},
      {"meso_partitions", c.meso_partitions},
      {"ablation",
       {{"backbone", c.ablation.backbone},
        {"local", c.ablation.local},
        {"meso", c.ablation.meso},
        {"global", c.ablation.global}}},
  };
}

PgcnConfig config_from_json(const nlohmann::json& j, PgcnConfig c) {
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("n_electrodes", c.n_electrodes);
    get("in_features", c.in_features);
    get("local_d1", c.local_d1);
    get("local_d2", c.local_d2);
    get("embed_dim", c.embed_dim);
    get("n_heads", c.n_heads);
    get("global_out", c.global_out);
    get("global_layers", c.global_layers);
    get("hidden1", c.hidden1);
    get("hidden2", c.hidden2);
    get("n_classes", c.n_classes);
    get("sparsify_fraction", c.sparsify_fraction);
    get("delta", c.delta);
    get("leaky_slope", c.leaky_slope);
    get("meso_partitions", c.meso_partitions);
    if (j.contains("ablation")) {
      const auto& a = j.at("ablation");
      if (a.is_string()) {
        c.ablation = ablation_by_name(a.get<std::string>());
      } else {
        auto flag = [&](const char* key, bool& f) {
          if (a.contains(key)) f = a.at(key).get<bool>();
        };
        flag("backbone", c.ablation.backbone);
        flag("local", c.ablation.local);
        flag("meso", c.ablation.meso);
        flag("global", c.ablation.global);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

// ---- stage operations --------------------------------------------------------

template <typename T>
LocalOut<T> local_forward(Var<T> x, Var<T> laplacian, Var<T> w1, Var<T> w2) {
  auto h1 = diff::relu(diff::matmul(diff::matmul(laplacian, x), w1));
  auto h2 = diff::relu(diff::matmul(diff::matmul(laplacian, h1), w2));
  const Var<T> parts[] = {x, h1, h2};
  return {h1, h2, diff::concat_cols<T>(parts)};
}

template <typename T>
LocalOut<T> backbone_forward(Var<T> x, Var<T> laplacian, Var<T> w1, Var<T> w2) {
  auto h1 = diff::relu(diff::matmul(diff::matmul(laplacian, x), w1));
  auto h2 = diff::relu(diff::matmul(diff::matmul(laplacian, h1), w2));
  return {h1, h2, h2};
}

template <typename T>
Attention<T> meso_attention(Var<T> h, Var<T> w, T slope) {
  auto hw = diff::matmul(h, w);
  auto e = diff::leaky_relu(diff::matmul(hw, diff::transpose(hw)), slope);
  return {e, diff::row_sums(e)};
}

template <typename T>
VirtualCenter<T> virtual_center(Var<T> lambda, Var<T> h, Var<T> positions) {
  if (lambda.cols() != 1 || lambda.rows() != h.rows() || positions.rows() != h.rows()) {
    throw ShapeError("virtual_center: lambda, features and positions disagree on node count");
  }
  auto weights = diff::softmax_rows(diff::transpose(lambda));
  return {weights, diff::matmul(weights, h), diff::matmul(weights, positions)};
}

template <typename T>
MesoOut<T> meso_forward(Var<T> x_local, Var<T> positions,
                        std::span<const geometry::RegionPartition> partitions,
                        std::span<const Var<T>> weights, T slope) {
  if (weights.size() != partitions.size()) {
    throw InvalidPartition("meso_forward: one weight matrix per partition required");
  }
  if (positions.rows() != x_local.rows()) {
    throw InvalidPartition("meso_forward: positions and features disagree on node count");
  }
  MesoOut<T> out;
  std::vector<Var<T>> rows{x_local};
  std::vector<Var<T>> locs{positions};
  const auto n = static_cast<std::size_t>(x_local.rows());
  for (std::size_t p = 0; p < partitions.size(); ++p) {
    const auto& part = partitions[p];
    if (part.electrode_count() != n) {
      throw InvalidPartition("partition " + part.name + " does not cover the feature rows");
    }
    std::vector<Var<T>> feats, places;
    out.attention.emplace_back();
    for (const auto& region : part.regions) {
      for (auto i : region.electrodes) {
        if (i >= n) throw InvalidPartition("partition " + part.name + " references a missing node");
      }
      auto h = diff::gather_rows<T>(x_local, region.electrodes);
      auto pos = diff::gather_rows<T>(positions, region.electrodes);
      auto att = meso_attention(h, weights[p], slope);
      auto vc = virtual_center(att.lambda, h, pos);
      out.attention.back().push_back(att);
      feats.push_back(vc.feature);
      places.push_back(vc.location);
    }
    out.centers.push_back(diff::concat_rows<T>(feats));
    out.locations.push_back(diff::concat_rows<T>(places));
    rows.push_back(out.centers.back());
    locs.push_back(out.locations.back());
  }
  out.x_meso = diff::concat_rows<T>(rows);
  out.p_meso = diff::concat_rows<T>(locs);
  return out;
}

template <typename T>
Var<T> position_enhance(Var<T> x_meso, Var<T> p_meso, Var<T> embed_w, Var<T> embed_b) {
  return diff::add(x_meso, diff::add_row(diff::matmul(p_meso, embed_w), embed_b));
}

template <typename T>
GlobalAdjacency<T> global_adjacency(Var<T> x_enhanced, std::span<const Var<T>> queries,
                                    std::span<const Var<T>> keys, Var<T> mix, double fraction) {
  if (queries.empty() || queries.size() != keys.size()) {
    throw ShapeError("global_adjacency: need matching query and key maps per head");
  }
  GlobalAdjacency<T> out;
  for (std::size_t k = 0; k < queries.size(); ++k) {
    auto q = diff::matmul(x_enhanced, queries[k]);
    auto kk = diff::matmul(x_enhanced, keys[k]);
    const T inv = T(1) / std::sqrt(static_cast<T>(q.cols()));
    out.heads.push_back(diff::softmax_rows(diff::scale(diff::matmul(q, diff::transpose(kk)), inv)));
  }
  out.dense = diff::weighted_sum<T>(mix, out.heads);
  out.sparse = diff::topk_sparsify(out.dense, fraction);
  return out;
}

template <typename T>
GlobalOut<T> global_forward(Var<T> x_meso, Var<T> a_global, std::span<const Var<T>> weights) {
  if (weights.empty()) throw ShapeError("global_forward: no layer weights");
  const bool zero_diag = a_global.value().diagonal().isZero(0);
  auto lap = diff::sym_normalize(a_global, zero_diag);
  GlobalOut<T> out;
  Var<T> o = x_meso;
  for (const auto& w : weights) {
    o = diff::relu(diff::matmul(diff::matmul(lap, o), w));
    out.layers.push_back(o);
  }
  const Var<T> parts[] = {x_meso, o};
  out.out = diff::concat_cols<T>(parts);
  return out;
}

template <typename T>
Var<T> classify(Var<T> flat, std::span<const Var<T>> weights, std::span<const Var<T>> biases) {
  if (weights.size() != 3 || biases.size() != 3) throw ShapeError("classify: expects three layers");
  Var<T> h = flat;
  for (std::size_t l = 0; l < 3; ++l) {
    h = diff::add_row(diff::matmul(h, weights[l]), biases[l]);
    if (l < 2) h = diff::relu(h);
  }
  return h;
}

// ---- model -------------------------------------------------------------------

template <typename T>
Pgcn<T>::Pgcn(PgcnConfig cfg, geometry::Montage montage,
              std::vector<geometry::RegionPartition> partitions,
              std::vector<std::vector<std::size_t>> neighbors)
    : cfg_(std::move(cfg)), montage_(std::move(montage)) {
  cfg_.validate();
  if (montage_.count() != cfg_.n_electrodes) {
    throw ConfigError("montage has " + std::to_string(montage_.count()) + " electrodes, config expects " +
                      std::to_string(cfg_.n_electrodes));
  }
  if (cfg_.ablation.meso) {
    for (const auto& name : cfg_.meso_partitions) {
      auto it = std::find_if(partitions.begin(), partitions.end(),
                             [&](const auto& p) { return p.name == name; });
      if (it == partitions.end()) throw InvalidPartition("partition " + name + " not provided");
      geometry::validate_partition(*it, montage_);
      partitions_.push_back(*it);
    }
  }
  positions_ = montage_.positions().cast<T>();
  init_adjacency_ = graph::init_distance_adjacency(geometry::pairwise_distances(montage_), cfg_.delta);
  if (neighbors.empty()) neighbors = geometry::grid_neighbors(montage_);
  backbone_laplacian_ =
      graph::sym_normalize<double>(graph::binary_adjacency(neighbors, montage_.count()), true).cast<T>();
}

template <typename T>
std::size_t Pgcn<T>::node_count() const {
  std::size_t n = cfg_.n_electrodes;
  for (const auto& p : partitions_) n += p.regions.size();
  return n;
}

template <typename T>
ParamSet<T> Pgcn<T>::init_params(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  auto glorot = [&](std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Matrix<T> m(static_cast<Eigen::Index>(fan_in), static_cast<Eigen::Index>(fan_out));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(u(rng));
    return m;
  };
  auto zeros = [](std::size_t r, std::size_t c) {
    return Matrix<T>::Zero(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)).eval();
  };
  const auto& c = cfg_;
  ParamSet<T> p;
  if (c.ablation.local) {
    p.add("local.A", init_adjacency_.cast<T>());
    p.add("local.W1", glorot(c.in_features, c.local_d1));
    p.add("local.W2", glorot(c.local_d1, c.local_d2));
  } else {
    p.add("backbone.W1", glorot(c.in_features, c.local_d1));
    p.add("backbone.W2", glorot(c.local_d1, c.embed_dim));
  }
  if (c.ablation.meso) {
    for (const auto& part : partitions_) p.add("meso." + part.name + ".W", glorot(c.embed_dim, c.embed_dim));
  }
  if (c.ablation.global) {
    const std::size_t head_dim = c.embed_dim / c.n_heads;
    p.add("embed.W", glorot(3, c.embed_dim));
    p.add("embed.b", zeros(1, c.embed_dim));
    for (std::size_t k = 0; k < c.n_heads; ++k) {
      p.add("global.query." + std::to_string(k), glorot(c.embed_dim, head_dim));
      p.add("global.key." + std::to_string(k), glorot(c.embed_dim, head_dim));
    }
    Matrix<T> mix = Matrix<T>::Constant(1, static_cast<Eigen::Index>(c.n_heads),
                                        T(1) / static_cast<T>(c.n_heads));
    p.add("global.mix", std::move(mix));
    for (std::size_t l = 0; l < c.global_layers; ++l) {
      p.add("global.W" + std::to_string(l + 1), glorot(l == 0 ? c.embed_dim : c.global_out, c.global_out));
    }
  }
  const std::size_t flat = node_count() * c.node_width();
  p.add("classifier.W1", glorot(flat, c.hidden1));
  p.add("classifier.b1", zeros(1, c.hidden1));
  p.add("classifier.W2", glorot(c.hidden1, c.hidden2));
  p.add("classifier.b2", zeros(1, c.hidden2));
  p.add("classifier.W3", glorot(c.hidden2, c.n_classes));
  p.add("classifier.b3", zeros(1, c.n_classes));
  return p;
}

template <typename T>
Matrix<T> Pgcn<T>::learned_adjacency(const ParamSet<T>& params) const {
  const auto& a = params["local.A"].value;
  return (a + a.transpose()) * T(0.5);
}

template <typename T>
Var<T> Pgcn<T>::forward(Tape<T>& tape, ParamSet<T>& params, std::span<const Matrix<T>> batch,
                        std::vector<LayerTrace<T>>* traces) const {
  if (batch.empty()) throw ShapeError("forward: empty batch");
  const auto& c = cfg_;
  const auto n = static_cast<Eigen::Index>(c.n_electrodes);
  const auto f = static_cast<Eigen::Index>(c.in_features);

  // Sample-independent pieces are recorded once per batch.
  Var<T> lap, w1, w2;
  if (c.ablation.local) {
    auto a = tape.param(params["local.A"]);
    lap = diff::sym_normalize(diff::scale(diff::add(a, diff::transpose(a)), T(0.5)), false);
    w1 = tape.param(params["local.W1"]);
    w2 = tape.param(params["local.W2"]);
  } else {
    lap = tape.constant(backbone_laplacian_);
    w1 = tape.param(params["backbone.W1"]);
    w2 = tape.param(params["backbone.W2"]);
  }
  Var<T> positions = tape.constant(positions_);
  std::vector<Var<T>> meso_w;
  for (const auto& part : partitions_) meso_w.push_back(tape.param(params["meso." + part.name + ".W"]));
  Var<T> embed_w, embed_b, mix;
  std::vector<Var<T>> queries, keys, global_w;
  if (c.ablation.global) {
    embed_w = tape.param(params["embed.W"]);
    embed_b = tape.param(params["embed.b"]);
    for (std::size_t k = 0; k < c.n_heads; ++k) {
      queries.push_back(tape.param(params["global.query." + std::to_string(k)]));
      keys.push_back(tape.param(params["global.key." + std::to_string(k)]));
    }
    mix = tape.param(params["global.mix"]);
    for (std::size_t l = 0; l < c.global_layers; ++l) {
      global_w.push_back(tape.param(params["global.W" + std::to_string(l + 1)]));
    }
  }

  std::vector<Var<T>> flats;
  flats.reserve(batch.size());
  if (traces) traces->assign(batch.size(), LayerTrace<T>{});
  for (std::size_t s = 0; s < batch.size(); ++s) {
    if (batch[s].rows() != n || batch[s].cols() != f) {
      throw ShapeError("forward: sample must be " + std::to_string(n) + " x " + std::to_string(f));
    }
    auto x = tape.constant(batch[s]);
    auto local = c.ablation.local ? local_forward(x, lap, w1, w2) : backbone_forward(x, lap, w1, w2);
    Var<T> feats = local.out;
    Var<T> places = positions;
    std::optional<MesoOut<T>> meso;
    if (c.ablation.meso) {
      meso = meso_forward<T>(local.out, positions, partitions_, meso_w, static_cast<T>(c.leaky_slope));
      feats = meso->x_meso;
      places = meso->p_meso;
    }
    Var<T> node_out = feats;
    std::optional<Var<T>> enhanced;
    std::optional<GlobalAdjacency<T>> gadj;
    std::optional<GlobalOut<T>> gout;
    if (c.ablation.global) {
      enhanced = position_enhance(feats, places, embed_w, embed_b);
      gadj = global_adjacency<T>(*enhanced, queries, keys, mix, c.sparsify_fraction);
      gout = global_forward<T>(feats, gadj->sparse, global_w);
      node_out = gout->out;
    }
    flats.push_back(diff::flatten(node_out));

    if (traces) {
      auto& tr = (*traces)[s];
      tr.x = x.value();
      tr.h1 = local.h1.value();
      tr.h2 = local.h2.value();
      tr.x_local = local.out.value();
      if (meso) {
        for (const auto& part : meso->attention) {
          tr.attention.emplace_back();
          tr.lambda.emplace_back();
          for (const auto& att : part) {
            tr.attention.back().push_back(att.e.value());
            tr.lambda.back().push_back(att.lambda.value());
          }
        }
        for (const auto& v : meso->centers) tr.centers.push_back(v.value());
        for (const auto& v : meso->locations) tr.center_locations.push_back(v.value());
        tr.x_meso = meso->x_meso.value();
        tr.p_meso = meso->p_meso.value();
      }
      if (gadj) {
        tr.x_enhanced = enhanced->value();
        for (const auto& g : gadj->heads) tr.heads.push_back(g.value());
        tr.a_global_dense = gadj->dense.value();
        tr.a_global = gadj->sparse.value();
        for (const auto& o : gout->layers) tr.global_layers.push_back(o.value());
        tr.x_global = gout->out.value();
      }
    }
  }

  auto stacked = flats.size() == 1 ? flats[0] : diff::concat_rows<T>(flats);
  const Var<T> ws[] = {tape.param(params["classifier.W1"]), tape.param(params["classifier.W2"]),
                       tape.param(params["classifier.W3"])};
  const Var<T> bs[] = {tape.param(params["classifier.b1"]), tape.param(params["classifier.b2"]),
                       tape.param(params["classifier.b3"])};
  auto logits = classify<T>(stacked, ws, bs);
  if (traces) {
    for (std::size_t s = 0; s < batch.size(); ++s) {
      (*traces)[s].logits = logits.value().row(static_cast<Eigen::Index>(s));
    }
  }
  return logits;
}

template <typename T>
std::pair<Matrix<T>, LayerTrace<T>> Pgcn<T>::run(ParamSet<T>& params, const Matrix<T>& x) const {
  Tape<T> tape;
  std::vector<LayerTrace<T>> traces;
  const Matrix<T> batch[] = {x};
  auto logits = forward(tape, params, batch, &traces);
  return {logits.value(), std::move(traces[0])};
}

std::vector<MatrixD> vanilla_gcn_layers(const MatrixD& x, const MatrixD& laplacian, std::size_t layers,
                                        std::size_t width, std::uint64_t seed) {
  if (laplacian.rows() != x.rows() || laplacian.cols() != x.rows()) {
    throw ShapeError("vanilla_gcn_layers: laplacian does not match node count");
  }
  std::mt19937_64 rng(seed);
  std::vector<MatrixD> out;
  MatrixD h = x;
  for (std::size_t l = 0; l < layers; ++l) {
    const auto fan_in = static_cast<std::size_t>(h.cols());
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + width));
    std::uniform_real_distribution<double> u(-limit, limit);
    MatrixD w(h.cols(), static_cast<Eigen::Index>(width));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
    h = (laplacian * h * w).cwiseMax(0.0);
    out.push_back(h);
  }
  return out;
}

// ---- checkpoint ----------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'P', 'G', 'C', 'N', 'C', 'K', 'P', 'T'};

template <typename U>
void put_le(std::string& out, U v) {
  static_assert(std::is_unsigned_v<U>);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

// Cursor over the checkpoint bytes.
struct Reader {
  std::string_view bytes;
  std::size_t pos = 0;

  std::string_view take(std::size_t n) {
    if (n > bytes.size() - pos) throw FormatError("checkpoint: unexpected end of file");
    auto v = bytes.substr(pos, n);
    pos += n;
    return v;
  }
  template <typename U>
  U le() {
    static_assert(std::is_unsigned_v<U>);
    const auto b = take(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const nlohmann::json header = {
      {"config", to_json(ckpt.config)},
      {"montage_csv", ckpt.montage_csv},
      {"partitions_json", ckpt.partitions_json},
  };
  const std::string text = header.dump();
  std::string buf(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(buf, kCheckpointVersion);
  put_le<std::uint64_t>(buf, text.size());
  buf += text;
  put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& p : ckpt.params) {
    put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(p.name.size()));
    buf += p.name;
    put_le<std::uint64_t>(buf, static_cast<std::uint64_t>(p.value.rows()));
    put_le<std::uint64_t>(buf, static_cast<std::uint64_t>(p.value.cols()));
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      put_le<std::uint64_t>(buf, std::bit_cast<std::uint64_t>(p.value.data()[i]));
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw FormatError("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r{bytes};
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("not a PGCN checkpoint");
  }
  r.pos = sizeof(kMagic);
  const auto version = r.le<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto text = r.take(r.le<std::uint64_t>());
  Checkpoint ckpt;
  try {
    const auto header = nlohmann::json::parse(text);
    ckpt.config = config_from_json(header.at("config"));
    ckpt.montage_csv = header.at("montage_csv").get<std::string>();
    ckpt.partitions_json = header.at("partitions_json").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  const auto count = r.le<std::uint32_t>();
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::string name(r.take(r.le<std::uint32_t>()));
    const auto rows = r.le<std::uint64_t>();
    const auto cols = r.le<std::uint64_t>();
    if (rows * cols > (bytes.size() - r.pos) / 8) throw FormatError("checkpoint: bad tensor header");
    MatrixD v(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = std::bit_cast<double>(r.le<std::uint64_t>());
    ckpt.params.add(name, std::move(v));
  }
  if (r.pos != bytes.size()) throw FormatError("checkpoint: trailing bytes");
  return ckpt;
}

// ---- instantiation -----------------------------------------------------------------

#define PGCN_INSTANTIATE(T)                                                                          \
  template LocalOut<T> local_forward(Var<T>, Var<T>, Var<T>, Var<T>);                                \
  template LocalOut<T> backbone_forward(Var<T>, Var<T>, Var<T>, Var<T>);                             \
  template Attention<T> meso_attention(Var<T>, Var<T>, T);                                           \
  template VirtualCenter<T> virtual_center(Var<T>, Var<T>, Var<T>);                                  \
  template MesoOut<T> meso_forward(Var<T>, Var<T>, std::span<const geometry::RegionPartition>,       \
                                   std::span<const Var<T>>, T);                                      \
  template Var<T> position_enhance(Var<T>, Var<T>, Var<T>, Var<T>);                                  \
  template GlobalAdjacency<T> global_adjacency(Var<T>, std::span<const Var<T>>,                      \
                                               std::span<const Var<T>>, Var<T>, double);             \
  template GlobalOut<T> global_forward(Var<T>, Var<T>, std::span<const Var<T>>);                     \
  template Var<T> classify(Var<T>, std::span<const Var<T>>, std::span<const Var<T>>);                \
  template class Pgcn<T>;

PGCN_INSTANTIATE(float)
PGCN_INSTANTIATE(double)

#undef PGCN_INSTANTIATE

}  // namespace pgcn::model
