#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "voxnas/cells.hpp"
#include "voxnas/genotype.hpp"
#include "voxnas/rng.hpp"
#include "voxnas/tape.hpp"

namespace voxnas {

/// U-shaped macro topology. `modalities` doubles as the base width m, so the
/// stems emit m*nodes channels and level i cells use per-node width
/// m*theta^i. The encoder holds `depth` DCs below the two stems; the decoder
/// mirrors it with depth+1 UCs so the head runs at full input resolution,
/// taking the stride-1 stem P0 as the top skip.
struct BackboneConfig {
  std::size_t modalities = 4;
  std::size_t nodes = 3;
  std::size_t theta = 2;
  std::size_t depth = 2;
  std::size_t label_channels = 3;
};

/// Full segmentation network. In search mode every cell edge is a hybrid
/// module and one alpha vector per (kind, node, source) is shared across all
/// cells of that kind; in derived mode cells hold only the genotype's two ops
/// per node. Forward maps [modalities, X, Y, Z] to sigmoid confidences
/// [label_channels, X, Y, Z]; spatial extents must be divisible by
/// 2^(depth+1).
class Network {
 public:
  Network(ParameterStore& store, const BackboneConfig& cfg, Rng& rng);
  Network(ParameterStore& store, const BackboneConfig& cfg, Rng& rng,
          const GenotypePair& genotype);

  NodeId forward(Tape& t, NodeId input) const;

  /// Builds a throwaway tape; returns the forward value only.
  DenseTensor predict(const DenseTensor& input) const;

  /// Reads the current alphas into a genotype. Search mode only.
  GenotypePair derive() const;

  const BackboneConfig& config() const { return cfg_; }
  bool search_mode() const { return search_; }

 private:
  void build(ParameterStore& store, Rng& rng, const GenotypePair* genotype);

  BackboneConfig cfg_;
  bool search_ = false;
  Parameter* p0_w_ = nullptr;
  Parameter* p0_g_ = nullptr;
  Parameter* p0_b_ = nullptr;
  Parameter* p1_w_ = nullptr;
  Parameter* p1_g_ = nullptr;
  Parameter* p1_b_ = nullptr;
  Parameter* head_w_ = nullptr;
  Parameter* head_b_ = nullptr;
  std::vector<Parameter*> dc_alphas_;
  std::vector<Parameter*> uc_alphas_;
  std::vector<Cell> dcs_;
  std::vector<Cell> ucs_;  // bottom-first: ucs_[0] is UC_{depth+1}
};

}  // namespace voxnas
