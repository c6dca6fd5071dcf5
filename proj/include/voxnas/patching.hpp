#ifndef VOXNAS_PATCHING_HPP
#define VOXNAS_PATCHING_HPP

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "voxnas/tensor.hpp"
#include "voxnas/volume.hpp"

namespace voxnas {

/// Auto-fitting placement on one axis: the minimal number of equal patches
/// covering the brain cube, overlapped evenly and centered on it.
struct AxisPlan {
  std::size_t patch_len = 0;
  std::size_t count = 0;
  long first_start = 0;  // may be negative; out-of-volume reads are zero
  long step = 0;
};

struct PatchGrid {
  std::array<AxisPlan, 3> axes;
  BrainCube cube;
  Extents volume;

  std::size_t total() const { return axes[0].count * axes[1].count * axes[2].count; }
  std::array<std::size_t, 3> index_at(std::size_t flat) const;
  std::vector<std::array<std::size_t, 3>> all_indices() const;
  std::array<long, 3> patch_start(const std::array<std::size_t, 3>& index) const;
};

PatchGrid plan_patches(const BrainCube& cube, const Extents& patch_shape,
                       const Extents& volume_extents);

/// Copies one patch out of a [c, Ds, Dc, Da] volume, zero-padding reads that
/// fall outside the volume bounds.
DenseTensor extract_patch(const DenseTensor& volume, const PatchGrid& grid,
                          const std::array<std::size_t, 3>& index);

/// Label counterpart; out-of-bounds voxels read as 0 (background).
std::vector<std::uint8_t> extract_label_patch(const std::vector<std::uint8_t>& label,
                                              const PatchGrid& grid,
                                              const std::array<std::size_t, 3>& index);

/// Overlap-averaged reassembly: each in-bounds voxel becomes the mean of all
/// patch values covering it; uncovered voxels stay 0. Requires exactly one
/// patch per grid index.
DenseTensor stitch(const std::vector<std::pair<std::array<std::size_t, 3>, DenseTensor>>& patches,
                   const PatchGrid& grid);

}  // namespace voxnas

#endif  // VOXNAS_PATCHING_HPP
