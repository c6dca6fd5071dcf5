#ifndef VOXNAS_CELLS_HPP
#define VOXNAS_CELLS_HPP

#include <string>
#include <utility>
#include <vector>

#include "voxnas/genotype.hpp"
#include "voxnas/ops.hpp"
#include "voxnas/rng.hpp"
#include "voxnas/tape.hpp"

namespace voxnas {

/// 4 groups when divisible, otherwise one group over all channels.
std::size_t gn_groups(std::size_t channels);

/// Uniform init scaled by 1/sqrt(fan_in).
DenseTensor kernel_init(const Extents& shape, std::size_t fan_in, Rng& rng);

/// One candidate operation instance owning its kernel parameters. Conv-style
/// candidates run core -> GN -> ReLU; pools and identity are bare. Channels
/// are preserved by every candidate; spatial extents follow the HM kind.
class CandidateOp {
 public:
  CandidateOp(ParameterStore& store, const std::string& prefix, const std::string& op_name,
              std::size_t channels, Rng& rng);

  NodeId forward(Tape& t, NodeId x) const;
  const std::string& name() const { return name_; }

 private:
  std::string name_;
  ConvGeom geom_;
  bool transposed_ = false;
  bool depthwise_ = false;
  bool se_ = false;
  bool identity_ = false;
  bool pool_ = false;
  PoolMode pool_mode_ = PoolMode::kMax;
  std::size_t groups_ = 1;
  Parameter* w_ = nullptr;   // conv / transposed / depthwise stage
  Parameter* pw_ = nullptr;  // pointwise stage of separable convs
  Parameter* se_w1_ = nullptr;
  Parameter* se_b1_ = nullptr;
  Parameter* se_w2_ = nullptr;
  Parameter* se_b2_ = nullptr;
  Parameter* gamma_ = nullptr;
  Parameter* beta_ = nullptr;
};

/// Softmax(alpha)-weighted mixture over every candidate of one kind. The
/// alpha parameter is owned by the caller: cells of the same kind share one
/// alpha set, so a single genotype describes them all.
class HybridModule {
 public:
  HybridModule(ParameterStore& store, const std::string& prefix, HmKind hm, std::size_t channels,
               Rng& rng, Parameter* alpha);

  NodeId forward(Tape& t, NodeId x) const;
  const std::vector<CandidateOp>& ops() const { return ops_; }
  Parameter* alpha() const { return alpha_; }

 private:
  std::vector<CandidateOp> ops_;
  Parameter* alpha_;
};

/// Edge positions of an n-node cell in canonical order: node k (1-based) has
/// edges from sources 0 (X0), 1 (X1), 2.. (earlier nodes), k+1 of them.
std::vector<std::pair<std::size_t, std::size_t>> enumerate_edges(std::size_t nodes);

/// Discretization rule: per edge the argmax-softmax(alpha) op (catalog order
/// breaks ties), per node the two edges with the largest retained weights
/// (source order breaks ties).
CellGenotype derive_cell_genotype(CellKind kind, std::size_t nodes,
                                  const std::vector<Parameter*>& edge_alphas);

/// One DC or UC. Both preprocess X0/X1 with a 1x1x1 conv + GN to the per-node
/// width (DC's pre0 also strides 2 to align resolutions), route each edge
/// through an HM (search mode) or a single retained op (derived mode), sum
/// edges into nodes, and concatenate the node outputs on the channel axis.
class Cell {
 public:
  /// Search mode; edge_alphas follow enumerate_edges(nodes) order.
  Cell(ParameterStore& store, const std::string& prefix, CellKind kind, std::size_t nodes,
       std::size_t width, std::size_t x0_channels, std::size_t x1_channels, Rng& rng,
       const std::vector<Parameter*>& edge_alphas);

  /// Derived mode; parameter names match the search-mode cell built with the
  /// same prefix, restricted to the retained ops.
  Cell(ParameterStore& store, const std::string& prefix, CellKind kind, std::size_t width,
       std::size_t x0_channels, std::size_t x1_channels, Rng& rng, const CellGenotype& genotype);

  /// x0 spatial extents must be exactly twice x1's.
  NodeId forward(Tape& t, NodeId x0, NodeId x1) const;

  CellKind kind() const { return kind_; }
  std::size_t width() const { return width_; }
  std::size_t nodes() const { return nodes_; }
  std::size_t out_channels() const { return width_ * nodes_; }

 private:
  struct Edge {
    std::size_t node;    // 1-based node the edge feeds
    std::size_t source;  // 0 = X0, 1 = X1, k+1 = node_k
    HybridModule hm;
  };
  struct DerivedEdge {
    std::size_t node;
    std::size_t source;
    CandidateOp op;
  };

  void build_pres(ParameterStore& store, const std::string& prefix, std::size_t x0_channels,
                  std::size_t x1_channels, Rng& rng);

  CellKind kind_;
  std::size_t nodes_;
  std::size_t width_;
  Parameter *pre0_w_, *pre0_g_, *pre0_b_;
  Parameter *pre1_w_, *pre1_g_, *pre1_b_;
  std::vector<Edge> edges_;                 // search mode
  std::vector<DerivedEdge> derived_edges_;  // derived mode
  bool search_ = true;
};

}  // namespace voxnas

#endif  // VOXNAS_CELLS_HPP
