#include "voxnas/backbone.hpp"

#include <stdexcept>

#include "voxnas/errors.hpp"
#include "voxnas/ops.hpp"

namespace voxnas {

namespace {

void check_config(const BackboneConfig& cfg) {
  if (cfg.modalities == 0 || cfg.nodes == 0 || cfg.theta < 2 || cfg.depth == 0 ||
      cfg.label_channels == 0) {
    throw ConfigError("backbone: need modalities,nodes,depth,label_channels >= 1 "
                                "and theta >= 2");
  }
}

std::vector<Parameter*> make_alphas(ParameterStore& store, CellKind kind, std::size_t nodes,
                                    const std::string& tag) {
  std::vector<Parameter*> alphas;
  for (const auto& [node, source] : enumerate_edges(nodes)) {
    const std::size_t len = op_catalog(edge_hm_kind(kind, source)).size();
    alphas.push_back(&store.create("alpha." + tag + ".n" + std::to_string(node) + ".s" +
                                       std::to_string(source),
                                   DenseTensor({len}), ParamKind::kHybrid));
  }
  return alphas;
}

}  // namespace

Network::Network(ParameterStore& store, const BackboneConfig& cfg, Rng& rng)
    : cfg_(cfg), search_(true) {
  build(store, rng, nullptr);
}

Network::Network(ParameterStore& store, const BackboneConfig& cfg, Rng& rng,
                 const GenotypePair& genotype)
    : cfg_(cfg), search_(false) {
  validate_genotype(genotype);
  if (genotype.dc.nodes.size() != cfg.nodes || genotype.uc.nodes.size() != cfg.nodes) {
    throw ConfigError("backbone: genotype node count does not match the config");
  }
  build(store, rng, &genotype);
}

void Network::build(ParameterStore& store, Rng& rng, const GenotypePair* genotype) {
  check_config(cfg_);
  const std::size_t m = cfg_.modalities;
  const std::size_t n = cfg_.nodes;
  const std::size_t stem_ch = m * n;

  if (search_) {
    dc_alphas_ = make_alphas(store, CellKind::kDC, n, "dc");
    uc_alphas_ = make_alphas(store, CellKind::kUC, n, "uc");
  }

  p0_w_ = &store.create("p0.w", kernel_init({stem_ch, m, 3, 3, 3}, m * 27, rng),
                        ParamKind::kKernel);
  p0_g_ = &store.create("p0.g", DenseTensor({stem_ch}, 1.0), ParamKind::kKernel);
  p0_b_ = &store.create("p0.b", DenseTensor({stem_ch}), ParamKind::kKernel);
  p1_w_ = &store.create("p1.w", kernel_init({stem_ch, m, 3, 3, 3}, m * 27, rng),
                        ParamKind::kKernel);
  p1_g_ = &store.create("p1.g", DenseTensor({stem_ch}, 1.0), ParamKind::kKernel);
  p1_b_ = &store.create("p1.b", DenseTensor({stem_ch}), ParamKind::kKernel);

  // Channel count of each encoder level: P0, P1, then one entry per DC.
  std::vector<std::size_t> lv_ch{stem_ch, stem_ch};
  std::size_t width = m;
  for (std::size_t i = 1; i <= cfg_.depth; ++i) {
    width *= cfg_.theta;
    const std::string prefix = "dc" + std::to_string(i);
    if (search_) {
      dcs_.emplace_back(store, prefix, CellKind::kDC, n, width, lv_ch[i - 1], lv_ch[i], rng,
                        dc_alphas_);
    } else {
      dcs_.emplace_back(store, prefix, CellKind::kDC, width, lv_ch[i - 1], lv_ch[i], rng,
                        genotype->dc);
    }
    lv_ch.push_back(dcs_.back().out_channels());
  }

  std::size_t below_ch = lv_ch.back();
  for (std::size_t j = cfg_.depth + 1; j >= 1; --j) {
    std::size_t uw = m;
    for (std::size_t p = 0; p < j; ++p) uw *= cfg_.theta;
    const std::string prefix = "uc" + std::to_string(j);
    if (search_) {
      ucs_.emplace_back(store, prefix, CellKind::kUC, n, uw, lv_ch[j - 1], below_ch, rng,
                        uc_alphas_);
    } else {
      ucs_.emplace_back(store, prefix, CellKind::kUC, uw, lv_ch[j - 1], below_ch, rng,
                        genotype->uc);
    }
    below_ch = ucs_.back().out_channels();
  }

  head_w_ = &store.create("head.w",
                          kernel_init({cfg_.label_channels, below_ch, 1, 1, 1}, below_ch, rng),
                          ParamKind::kKernel);
  head_b_ = &store.create("head.b", DenseTensor({cfg_.label_channels}), ParamKind::kKernel);
}

NodeId Network::forward(Tape& t, NodeId input) const {
  const DenseTensor& v = t.val(input);
  if (v.rank() != 4 || v.shape[0] != cfg_.modalities) {
    throw DataError("network forward: expected [" + std::to_string(cfg_.modalities) +
                                ", X, Y, Z], got " + shape_str(v.shape));
  }
  const std::size_t div = std::size_t{1} << (cfg_.depth + 1);
  for (int a = 1; a < 4; ++a) {
    if (v.shape[a] % div != 0) {
      throw DataError("network forward: spatial extents must be divisible by " +
                                  std::to_string(div) + ", got " + shape_str(v.shape));
    }
  }

  const std::size_t stem_groups = gn_groups(cfg_.modalities * cfg_.nodes);
  NodeId p0 = conv3d(t, input, t.leaf(*p0_w_), ConvGeom{1, 1, 1});
  p0 = group_norm(t, p0, t.leaf(*p0_g_), t.leaf(*p0_b_), stem_groups);
  NodeId p1 = conv3d(t, input, t.leaf(*p1_w_), ConvGeom{2, 1, 1});
  p1 = group_norm(t, p1, t.leaf(*p1_g_), t.leaf(*p1_b_), stem_groups);

  std::vector<NodeId> levels{p0, p1};
  for (const Cell& dc : dcs_) {
    levels.push_back(dc.forward(t, levels[levels.size() - 2], levels.back()));
  }

  NodeId y = levels.back();
  for (std::size_t i = 0; i < ucs_.size(); ++i) {
    const std::size_t j = cfg_.depth + 1 - i;
    y = ucs_[i].forward(t, levels[j - 1], y);
  }

  NodeId out = conv3d(t, y, t.leaf(*head_w_), ConvGeom{1, 1, 0});
  out = add_channel_bias(t, out, t.leaf(*head_b_));
  return sigmoid(t, out);
}

DenseTensor Network::predict(const DenseTensor& input) const {
  Tape t;
  return t.val(forward(t, t.constant(input)));
}

GenotypePair Network::derive() const {
  if (!search_) throw std::logic_error("derive requires a search-mode network");
  GenotypePair g;
  g.dc = derive_cell_genotype(CellKind::kDC, cfg_.nodes, dc_alphas_);
  g.uc = derive_cell_genotype(CellKind::kUC, cfg_.nodes, uc_alphas_);
  return g;
}

}  // namespace voxnas
