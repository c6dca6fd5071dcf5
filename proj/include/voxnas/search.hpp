#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "voxnas/backbone.hpp"
#include "voxnas/genotype.hpp"
#include "voxnas/optim.hpp"
#include "voxnas/volume.hpp"

namespace voxnas {

struct SearchConfig {
  std::size_t n_epochs = 60;          // N_E
  std::size_t count_threshold = 20;   // N_C
  double hybrid_fraction = 0.2;       // share of cases reserved for alpha updates
  AdamConfig hybrid_opt{3e-3, 0.9, 0.999, 1e-8};
  AdamConfig kernel_opt{1e-3, 0.9, 0.999, 1e-8};
  Extents patch_shape{32, 32, 32};
  double loss_eps = 1e-6;  // dice smoothing
  std::uint64_t seed = 0;
};

/// Deterministic disjoint split; the hybrid side gets round(fraction*N)
/// cases, clamped so both sides stay nonempty. Throws DataError below 2
/// cases.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_search_data(
    std::size_t n_cases, double hybrid_fraction, std::uint64_t seed);

/// Occurrence counts of derived genotypes, keyed by canonical serialization,
/// in first-seen order.
class GenotypeCounter {
 public:
  /// Returns the count after insertion.
  std::size_t add(const GenotypePair& g);
  std::size_t total() const { return total_; }
  std::size_t distinct() const { return entries_.size(); }
  /// Highest count; earlier insertion wins ties. Requires a nonempty counter.
  const GenotypePair& most_common() const;

 private:
  struct Entry {
    std::string key;
    GenotypePair genotype;
    std::size_t count = 0;
  };
  std::vector<Entry> entries_;
  std::size_t total_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::optional<double> hybrid_loss;  // absent on the early-stop epoch
  std::optional<double> kernel_loss;
  std::string genotype_hash;
};

struct SearchResult {
  GenotypePair genotype;
  std::vector<EpochRecord> history;
  bool early_stopped = false;
};

/// Alternating search over normalized cases: each epoch derives and counts
/// the current genotype, stops once one reaches count_threshold, otherwise
/// runs one alpha pass over the hybrid split and one kernel pass over the
/// rest (one uniformly sampled brain-cube patch per case, batch 1). Exhausted
/// epochs fall back to the most common genotype. The caller-provided store
/// holds the network parameters and keeps their final state afterwards.
SearchResult search(const std::vector<VolumeCase>& cases, const SearchConfig& scfg,
                    const BackboneConfig& bcfg, ParameterStore& store);

/// One optimizer over every parameter of `net`; per-epoch mean dice loss is
/// returned, one entry per epoch. Each case contributes one sampled patch per
/// epoch, augmented first when `aug` is set.
std::vector<double> train_network(Network& net, ParameterStore& store,
                                  const std::vector<VolumeCase>& cases, std::size_t epochs,
                                  const Extents& patch_shape, const AdamConfig& opt_cfg,
                                  std::uint64_t seed, const AugmentConfig* aug = nullptr,
                                  double loss_eps = 1e-6);

/// Deterministic folds with sizes differing by at most one; returns k
/// (train_indices, val_indices) pairs. Throws DataError when N < k.
std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> kfold_split(
    std::size_t n_cases, std::size_t k, std::uint64_t seed);

}  // namespace voxnas
