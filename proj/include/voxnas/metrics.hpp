#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "voxnas/tape.hpp"
#include "voxnas/tensor.hpp"

namespace voxnas {

/// Binary masks of the three evaluated subregions over one spatial volume:
/// ET = label 4, TC = labels {1,4}, WT = labels {1,2,4}, so ET ⊆ TC ⊆ WT.
struct SubregionMasks {
  Extents dims;  // spatial [X, Y, Z]
  std::vector<std::uint8_t> et, tc, wt;
};

/// Throws DataError on label values outside {0, 1, 2, 4}.
SubregionMasks label_to_subregions(const std::vector<std::uint8_t>& label, const Extents& dims);

/// Stacks masks into the loss/metric target layout [3, X, Y, Z] (ET, TC, WT).
DenseTensor masks_to_tensor(const SubregionMasks& m);

/// Collapses per-subregion confidences [3, X, Y, Z] into a label volume:
/// 4 where ET fires, 1 where TC fires without ET, 2 where only WT fires.
/// A channel fires strictly above `threshold`.
std::vector<std::uint8_t> prediction_to_label(const DenseTensor& confidence,
                                              double threshold = 0.5);

/// Raw per-channel thresholding; masks need not be nested unless
/// `force_nested`, which widens TC by ET and WT by TC.
SubregionMasks subregions_from_confidence(const DenseTensor& confidence, double threshold = 0.5,
                                          bool force_nested = false);

/// Mean soft Dice over the three channels of `target` ([3, ...] binary),
/// as 1 - (1/3)·Σ (eps + 2ΣYŶ)/(eps + ΣY + ΣŶ). Differentiable in pred.
NodeId dice_loss(Tape& t, NodeId pred, const DenseTensor& target, double eps = 1e-6);

/// 2|T∩T̂| / (|T|+|T̂|); 1.0 when both masks are empty.
double dice_score(const std::vector<std::uint8_t>& t, const std::vector<std::uint8_t>& t_hat);

/// True positive rate |T∩T̂|/|T|; empty T leaves it undefined.
std::optional<double> sensitivity(const std::vector<std::uint8_t>& t,
                                  const std::vector<std::uint8_t>& t_hat);

/// True negative rate |¬T∩¬T̂|/|¬T|; all-ones T leaves it undefined.
std::optional<double> specificity(const std::vector<std::uint8_t>& t,
                                  const std::vector<std::uint8_t>& t_hat);

/// Mask voxels with a 6-neighbor outside the mask or outside the volume.
std::vector<std::uint8_t> surface_mask(const std::vector<std::uint8_t>& mask,
                                       const Extents& dims);

/// Max over both directions of the 95th-percentile (nearest-rank) distance
/// between the two surfaces, in voxel units. One empty mask scores the
/// volume's Euclidean diagonal; two empty masks score 0.
double hausdorff95(const std::vector<std::uint8_t>& t, const std::vector<std::uint8_t>& t_hat,
                   const Extents& dims);

struct RegionMetrics {
  double dice = 0.0;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  double hausdorff95 = 0.0;
};

struct MetricsRecord {
  RegionMetrics et, tc, wt;
};

/// All four metrics for each subregion of a predicted vs. true label volume.
MetricsRecord evaluate_case(const std::vector<std::uint8_t>& pred,
                            const std::vector<std::uint8_t>& truth, const Extents& dims);

/// CSV report: one row per (case, region) plus a trailing mean row per
/// region; undefined entries render as "nan" and stay out of the means.
std::string metrics_csv(const std::vector<std::pair<std::string, MetricsRecord>>& rows);

}  // namespace voxnas
