#include "voxnas/cells.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "voxnas/errors.hpp"

namespace voxnas {

std::size_t gn_groups(std::size_t channels) { return channels % 4 == 0 ? 4 : 1; }

DenseTensor kernel_init(const Extents& shape, std::size_t fan_in, Rng& rng) {
  DenseTensor w(shape);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : w.data) v = rng.uniform(-bound, bound);
  return w;
}

namespace {

struct OpShape {
  ConvGeom geom{1, 1, 1};
  bool transposed = false;
  bool depthwise = false;
  bool se = false;
  bool pool = false;
  bool identity = false;
  PoolMode mode = PoolMode::kMax;
};

OpShape resolve_op(const std::string& name) {
  OpShape s;
  if (name == "conv") {
    s.geom = {1, 1, 1};
  } else if (name == "dil_conv") {
    s.geom = {1, 2, 2};
  } else if (name == "dep_conv") {
    s.geom = {1, 1, 1};
    s.depthwise = true;
  } else if (name == "se_conv") {
    s.geom = {1, 1, 1};
    s.se = true;
  } else if (name == "identity") {
    s.identity = true;
  } else if (name == "d_conv") {
    s.geom = {2, 1, 1};
  } else if (name == "d_dil_conv") {
    s.geom = {2, 2, 2};
  } else if (name == "d_dep_conv") {
    s.geom = {2, 1, 1};
    s.depthwise = true;
  } else if (name == "d_se_conv") {
    s.geom = {2, 1, 1};
    s.se = true;
  } else if (name == "max_pool") {
    s.pool = true;
    s.mode = PoolMode::kMax;
  } else if (name == "avg_pool") {
    s.pool = true;
    s.mode = PoolMode::kAvg;
  } else if (name == "u_conv") {
    s.geom = {2, 1, 1};
    s.transposed = true;
  } else if (name == "u_dil_conv") {
    s.geom = {2, 2, 2};
    s.transposed = true;
  } else if (name == "u_dep_conv") {
    s.geom = {2, 1, 1};
    s.transposed = true;
    s.depthwise = true;
  } else if (name == "u_se_conv") {
    s.geom = {2, 1, 1};
    s.transposed = true;
    s.se = true;
  } else {
    throw std::invalid_argument("unknown candidate op '" + name + "'");
  }
  return s;
}

}  // namespace

CandidateOp::CandidateOp(ParameterStore& store, const std::string& prefix,
                         const std::string& op_name, std::size_t channels, Rng& rng)
    : name_(op_name) {
  const OpShape s = resolve_op(op_name);
  geom_ = s.geom;
  transposed_ = s.transposed;
  depthwise_ = s.depthwise;
  se_ = s.se;
  identity_ = s.identity;
  pool_ = s.pool;
  pool_mode_ = s.mode;
  groups_ = gn_groups(channels);
  if (identity_ || pool_) return;

  const std::string base = prefix + "." + op_name;
  const std::size_t C = channels;
  if (depthwise_) {
    w_ = &store.create(base + ".w", kernel_init({C, 1, 3, 3, 3}, 27, rng), ParamKind::kKernel);
    pw_ = &store.create(base + ".pw", kernel_init({C, C, 1, 1, 1}, C, rng), ParamKind::kKernel);
  } else {
    w_ = &store.create(base + ".w", kernel_init({C, C, 3, 3, 3}, C * 27, rng), ParamKind::kKernel);
  }
  if (se_) {
    if (C % 2 != 0) {
      throw ConfigError("se candidates need an even channel count, got " +
                                  std::to_string(C));
    }
    const std::size_t R = C / 2;
    se_w1_ = &store.create(base + ".se_w1", kernel_init({R, C}, C, rng), ParamKind::kKernel);
    se_b1_ = &store.create(base + ".se_b1", DenseTensor({R}), ParamKind::kKernel);
    se_w2_ = &store.create(base + ".se_w2", kernel_init({C, R}, R, rng), ParamKind::kKernel);
    se_b2_ = &store.create(base + ".se_b2", DenseTensor({C}), ParamKind::kKernel);
  }
  gamma_ = &store.create(base + ".g", DenseTensor({C}, 1.0), ParamKind::kKernel);
  beta_ = &store.create(base + ".b", DenseTensor({C}), ParamKind::kKernel);
}

NodeId CandidateOp::forward(Tape& t, NodeId x) const {
  if (identity_) return x;
  if (pool_) return pool3d(t, x, pool_mode_);
  NodeId y;
  if (transposed_) {
    if (depthwise_) {
      y = conv3d_transposed_depthwise(t, x, t.leaf(*w_), geom_, 1);
      y = conv3d(t, y, t.leaf(*pw_), ConvGeom{1, 1, 0});
    } else {
      y = conv3d_transposed(t, x, t.leaf(*w_), geom_, 1);
    }
  } else {
    if (depthwise_) {
      y = conv3d_depthwise(t, x, t.leaf(*w_), geom_);
      y = conv3d(t, y, t.leaf(*pw_), ConvGeom{1, 1, 0});
    } else {
      y = conv3d(t, x, t.leaf(*w_), geom_);
    }
  }
  if (se_) {
    y = se_gate_apply(t, y, t.leaf(*se_w1_), t.leaf(*se_b1_), t.leaf(*se_w2_), t.leaf(*se_b2_));
  }
  y = group_norm(t, y, t.leaf(*gamma_), t.leaf(*beta_), groups_);
  return relu(t, y);
}

HybridModule::HybridModule(ParameterStore& store, const std::string& prefix, HmKind hm,
                           std::size_t channels, Rng& rng, Parameter* alpha)
    : alpha_(alpha) {
  const auto& catalog = op_catalog(hm);
  if (alpha_ == nullptr || alpha_->value.numel() != catalog.size()) {
    throw std::invalid_argument("hybrid module '" + prefix +
                                "': alpha length must match the candidate count");
  }
  ops_.reserve(catalog.size());
  for (const std::string& op : catalog) ops_.emplace_back(store, prefix, op, channels, rng);
}

NodeId HybridModule::forward(Tape& t, NodeId x) const {
  NodeId weights = softmax(t, t.leaf(*alpha_));
  std::vector<NodeId> ys;
  ys.reserve(ops_.size());
  for (const CandidateOp& op : ops_) ys.push_back(op.forward(t, x));
  return weighted_sum(t, ys, weights);
}

std::vector<std::pair<std::size_t, std::size_t>> enumerate_edges(std::size_t nodes) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t k = 1; k <= nodes; ++k) {
    for (std::size_t s = 0; s < k + 1; ++s) out.emplace_back(k, s);
  }
  return out;
}

CellGenotype derive_cell_genotype(CellKind kind, std::size_t nodes,
                                  const std::vector<Parameter*>& edge_alphas) {
  const auto edges = enumerate_edges(nodes);
  if (edge_alphas.size() != edges.size()) {
    throw std::invalid_argument("derive_cell_genotype: alpha count does not match edge count");
  }
  CellGenotype g;
  g.kind = kind;
  std::size_t e = 0;
  for (std::size_t k = 1; k <= nodes; ++k) {
    struct Ranked {
      double weight;
      std::size_t source;
      std::string op;
    };
    std::vector<Ranked> ranked;
    for (; e < edges.size() && edges[e].first == k; ++e) {
      const std::size_t source = edges[e].second;
      const auto& catalog = op_catalog(edge_hm_kind(kind, source));
      const std::vector<double> w = softmax_values(edge_alphas[e]->value.data);
      std::size_t best = 0;
      for (std::size_t i = 1; i < w.size(); ++i) {
        if (w[i] > w[best]) best = i;  // ties fall to catalog order
      }
      ranked.push_back({w[best], source, catalog[best]});
    }
    std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
      if (a.weight != b.weight) return a.weight > b.weight;
      return a.source < b.source;
    });
    std::array<GenotypeEdge, 2> pair{GenotypeEdge{ranked[0].source, ranked[0].op},
                                     GenotypeEdge{ranked[1].source, ranked[1].op}};
    if (pair[0].source > pair[1].source) std::swap(pair[0], pair[1]);
    g.nodes.push_back(pair);
  }
  return g;
}

void Cell::build_pres(ParameterStore& store, const std::string& prefix, std::size_t x0_channels,
                      std::size_t x1_channels, Rng& rng) {
  pre0_w_ = &store.create(prefix + ".pre0.w", kernel_init({width_, x0_channels, 1, 1, 1},
                                                          x0_channels, rng),
                          ParamKind::kKernel);
  pre0_g_ = &store.create(prefix + ".pre0.g", DenseTensor({width_}, 1.0), ParamKind::kKernel);
  pre0_b_ = &store.create(prefix + ".pre0.b", DenseTensor({width_}), ParamKind::kKernel);
  pre1_w_ = &store.create(prefix + ".pre1.w", kernel_init({width_, x1_channels, 1, 1, 1},
                                                          x1_channels, rng),
                          ParamKind::kKernel);
  pre1_g_ = &store.create(prefix + ".pre1.g", DenseTensor({width_}, 1.0), ParamKind::kKernel);
  pre1_b_ = &store.create(prefix + ".pre1.b", DenseTensor({width_}), ParamKind::kKernel);
}

Cell::Cell(ParameterStore& store, const std::string& prefix, CellKind kind, std::size_t nodes,
           std::size_t width, std::size_t x0_channels, std::size_t x1_channels, Rng& rng,
           const std::vector<Parameter*>& edge_alphas)
    : kind_(kind), nodes_(nodes), width_(width), search_(true) {
  build_pres(store, prefix, x0_channels, x1_channels, rng);
  const auto edges = enumerate_edges(nodes);
  if (edge_alphas.size() != edges.size()) {
    throw std::invalid_argument("cell '" + prefix + "': alpha count does not match edge count");
  }
  edges_.reserve(edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto [node, source] = edges[e];
    const std::string ep = prefix + ".n" + std::to_string(node) + ".s" + std::to_string(source);
    edges_.push_back(Edge{node, source,
                          HybridModule(store, ep, edge_hm_kind(kind, source), width, rng,
                                       edge_alphas[e])});
  }
}

Cell::Cell(ParameterStore& store, const std::string& prefix, CellKind kind, std::size_t width,
           std::size_t x0_channels, std::size_t x1_channels, Rng& rng,
           const CellGenotype& genotype)
    : kind_(kind), nodes_(genotype.nodes.size()), width_(width), search_(false) {
  if (genotype.kind != kind) {
    throw std::invalid_argument("cell '" + prefix + "': genotype kind mismatch");
  }
  validate_genotype(genotype);
  build_pres(store, prefix, x0_channels, x1_channels, rng);
  for (std::size_t k = 1; k <= nodes_; ++k) {
    for (const GenotypeEdge& e : genotype.nodes[k - 1]) {
      const std::string ep = prefix + ".n" + std::to_string(k) + ".s" + std::to_string(e.source);
      derived_edges_.push_back(DerivedEdge{k, e.source, CandidateOp(store, ep, e.op, width, rng)});
    }
  }
}

NodeId Cell::forward(Tape& t, NodeId x0, NodeId x1) const {
  const DenseTensor& v0 = t.val(x0);
  const DenseTensor& v1 = t.val(x1);
  if (v0.rank() != 4 || v1.rank() != 4) {
    throw std::invalid_argument("cell forward: inputs must be [c,X,Y,Z]");
  }
  for (int a = 1; a < 4; ++a) {
    if (v0.shape[a] != 2 * v1.shape[a]) {
      throw std::invalid_argument("cell forward: x0 spatial extents must be twice x1's, got " +
                                  shape_str(v0.shape) + " vs " + shape_str(v1.shape));
    }
  }

  const std::size_t G = gn_groups(width_);
  const ConvGeom pre0_geom{kind_ == CellKind::kDC ? 2 : 1, 1, 0};
  NodeId p0 = conv3d(t, x0, t.leaf(*pre0_w_), pre0_geom);
  p0 = group_norm(t, p0, t.leaf(*pre0_g_), t.leaf(*pre0_b_), G);
  NodeId p1 = conv3d(t, x1, t.leaf(*pre1_w_), ConvGeom{1, 1, 0});
  p1 = group_norm(t, p1, t.leaf(*pre1_g_), t.leaf(*pre1_b_), G);

  std::vector<NodeId> sources{p0, p1};
  auto edge_forward = [&](std::size_t node) {
    NodeId acc = 0;
    bool first = true;
    auto feed = [&](NodeId y) {
      acc = first ? y : add(t, acc, y);
      first = false;
    };
    if (search_) {
      for (const Edge& e : edges_) {
        if (e.node == node) feed(e.hm.forward(t, sources[e.source]));
      }
    } else {
      for (const DerivedEdge& e : derived_edges_) {
        if (e.node == node) feed(e.op.forward(t, sources[e.source]));
      }
    }
    return acc;
  };
  for (std::size_t k = 1; k <= nodes_; ++k) sources.push_back(edge_forward(k));

  std::vector<NodeId> node_outputs(sources.begin() + 2, sources.end());
  return concat_channels(t, node_outputs);
}

}  // namespace voxnas
