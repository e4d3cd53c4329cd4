// SPDX-License-Identifier: Apache-2.0
#include "pgcn/gradcheck.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "pgcn/error.hpp"

namespace pgcn::gradcheck {

using diff::LossFn;
using diff::ParamSet;
using diff::Tape;
using diff::Var;

geometry::Montage small_montage() {
  std::vector<geometry::Electrode> e;
  for (int i = 0; i < 8; ++i) {
    const double ang = 2.0 * std::numbers::pi * (i + 0.5) / 8.0;
    e.push_back({"E" + std::to_string(i), {3.0 * std::cos(ang), 3.0 * std::sin(ang), 1.0 + 0.1 * i}});
  }
  return geometry::Montage(std::move(e));
}

std::vector<geometry::RegionPartition> small_partitions(const geometry::Montage& m) {
  (void)m;
  // Electrode i sits at angle (i + 0.5) * 45 degrees.
  return {
      {"regions", {{"front", {0, 1, 2, 3}}, {"back", {4, 5, 6, 7}}}},
      {"hemispheres", {{"right", {0, 1, 6, 7}}, {"left", {2, 3, 4, 5}}}},
  };
}

model::PgcnConfig small_config() {
  model::PgcnConfig c;
  c.n_electrodes = 8;
  c.in_features = 3;
  c.local_d1 = 3;
  c.local_d2 = 2;
  c.embed_dim = 8;
  c.n_heads = 2;
  c.global_out = 6;
  c.hidden1 = 8;
  c.hidden2 = 6;
  c.n_classes = 3;
  c.meso_partitions = {"regions", "hemispheres"};
  return c;
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"local", "meso", "global", "classifier", "full"};
  return names;
}

double tolerance(train::Precision p) { return p == train::Precision::F64 ? 1e-6 : 1e-4; }

namespace {

MatrixD random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  MatrixD m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

// Fixed random readout sum(out .* R) so every output entry matters.
template <typename T>
Var<T> readout(Var<T> out, const MatrixD& r) {
  return diff::sum(diff::mask(out, r.cast<T>().eval()));
}

// Inputs shared by all stage losses.
struct Fixture {
  model::PgcnConfig cfg = small_config();
  geometry::Montage montage = small_montage();
  std::vector<geometry::RegionPartition> parts = small_partitions(montage);
  std::vector<MatrixD> inputs;
  std::vector<std::size_t> labels;
  MatrixD x_local, x_meso, p_meso, flat;
  MatrixD r_local, r_meso, r_pos, r_global, r_logits;

  explicit Fixture(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto n = static_cast<Eigen::Index>(cfg.n_electrodes);
    const auto nodes = n + 4;
    const auto e = static_cast<Eigen::Index>(cfg.embed_dim);
    for (int s = 0; s < 2; ++s) inputs.push_back(random_matrix(rng, n, static_cast<Eigen::Index>(cfg.in_features)));
    labels = {0, 2};
    x_local = random_matrix(rng, n, e);
    x_meso = random_matrix(rng, nodes, e);
    p_meso = random_matrix(rng, nodes, 3, -3.0, 3.0);
    flat = random_matrix(rng, 2, nodes * static_cast<Eigen::Index>(cfg.node_width()));
    r_local = random_matrix(rng, n, e);
    r_meso = random_matrix(rng, nodes, e);
    r_pos = random_matrix(rng, nodes, 3);
    r_global = random_matrix(rng, nodes, static_cast<Eigen::Index>(cfg.node_width()));
    r_logits = random_matrix(rng, 2, static_cast<Eigen::Index>(cfg.n_classes));
  }
};

template <typename T>
LossFn<T> stage_loss(const std::string& stage, const Fixture& fx, const model::Pgcn<T>& net) {
  const auto& cfg = fx.cfg;
  if (stage == "local") {
    return [&fx](Tape<T>& t, ParamSet<T>& p) {
      auto a = t.param(p["local.A"]);
      auto lap = diff::sym_normalize(diff::scale(diff::add(a, diff::transpose(a)), T(0.5)), false);
      auto out = model::local_forward(t.constant(fx.inputs[0].cast<T>()), lap, t.param(p["local.W1"]),
                                      t.param(p["local.W2"]));
      return readout(out.out, fx.r_local);
    };
  }
  if (stage == "meso") {
    return [&fx, &cfg](Tape<T>& t, ParamSet<T>& p) {
      std::vector<Var<T>> ws;
      for (const auto& part : fx.parts) ws.push_back(t.param(p["meso." + part.name + ".W"]));
      auto meso = model::meso_forward<T>(t.constant(fx.x_local.cast<T>()), t.constant(fx.montage.positions().cast<T>()),
                                         fx.parts, ws, static_cast<T>(cfg.leaky_slope));
      return diff::add(readout(meso.x_meso, fx.r_meso), readout(meso.p_meso, fx.r_pos));
    };
  }
  if (stage == "global") {
    return [&fx, &cfg](Tape<T>& t, ParamSet<T>& p) {
      auto xm = t.constant(fx.x_meso.cast<T>());
      auto enh = model::position_enhance(xm, t.constant(fx.p_meso.cast<T>()), t.param(p["embed.W"]),
                                         t.param(p["embed.b"]));
      std::vector<Var<T>> q, k;
      for (std::size_t h = 0; h < cfg.n_heads; ++h) {
        q.push_back(t.param(p["global.query." + std::to_string(h)]));
        k.push_back(t.param(p["global.key." + std::to_string(h)]));
      }
      auto adj = model::global_adjacency<T>(enh, q, k, t.param(p["global.mix"]), cfg.sparsify_fraction);
      const Var<T> w[] = {t.param(p["global.W1"])};
      auto out = model::global_forward<T>(xm, adj.sparse, w);
      return readout(out.out, fx.r_global);
    };
  }
  if (stage == "classifier") {
    return [&fx](Tape<T>& t, ParamSet<T>& p) {
      const Var<T> ws[] = {t.param(p["classifier.W1"]), t.param(p["classifier.W2"]), t.param(p["classifier.W3"])};
      const Var<T> bs[] = {t.param(p["classifier.b1"]), t.param(p["classifier.b2"]), t.param(p["classifier.b3"])};
      return readout(model::classify<T>(t.constant(fx.flat.cast<T>()), ws, bs), fx.r_logits);
    };
  }
  if (stage == "full") {
    return [&fx, &net](Tape<T>& t, ParamSet<T>& p) {
      std::vector<Matrix<T>> xs;
      for (const auto& x : fx.inputs) xs.push_back(x.cast<T>());
      return diff::cross_entropy<T>(net.forward(t, p, xs), fx.labels);
    };
  }
  throw ConfigError("unknown gradcheck stage " + stage);
}

std::vector<std::string> prefixes(const std::string& stage) {
  if (stage == "local") return {"local."};
  if (stage == "meso") return {"meso."};
  if (stage == "global") return {"embed.", "global."};
  if (stage == "classifier") return {"classifier."};
  return {};
}

// Random, strictly positive biases keep the classifier's ReLUs away from
// their kinks and exercise the bias paths.
template <typename T>
void perturb_biases(ParamSet<T>& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.05, 0.3);
  for (auto& param : p) {
    if (param.name.find(".b") != std::string::npos) {
      for (Eigen::Index i = 0; i < param.value.size(); ++i) param.value.data()[i] = static_cast<T>(u(rng));
    }
  }
}

}  // namespace

std::vector<StageResult> run(const std::string& stage, train::Precision precision, std::uint64_t seed) {
  std::vector<std::string> stages;
  if (stage == "all") {
    stages = stage_names();
  } else {
    (void)prefixes(stage);
    if (std::find(stage_names().begin(), stage_names().end(), stage) == stage_names().end()) {
      throw ConfigError("unknown gradcheck stage " + stage);
    }
    stages = {stage};
  }
  const Fixture fx(seed);
  const model::Pgcn<double> net64(fx.cfg, fx.montage, fx.parts);
  const model::Pgcn<float> net32(fx.cfg, fx.montage, fx.parts);
  std::vector<StageResult> out;
  for (const auto& s : stages) {
    diff::GradCheckOptions opt;
    opt.only = prefixes(s);
    StageResult r{s, {}, tolerance(precision)};
    auto p64 = net64.init_params(seed);
    perturb_biases(p64, seed + 1);
    if (precision == train::Precision::F64) {
      r.result = diff::grad_check(p64, stage_loss<double>(s, fx, net64), opt);
    } else {
      auto p32 = p64.cast<float>();
      r.result = diff::grad_check_mixed(p32, stage_loss<float>(s, fx, net32), stage_loss<double>(s, fx, net64), opt);
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace pgcn::gradcheck
