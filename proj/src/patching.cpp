#include "voxnas/patching.hpp"

#include <set>
#include <stdexcept>
#include <string>

namespace voxnas {

std::array<std::size_t, 3> PatchGrid::index_at(std::size_t flat) const {
  if (flat >= total()) throw std::out_of_range("PatchGrid::index_at: flat index out of range");
  std::array<std::size_t, 3> idx;
  idx[2] = flat % axes[2].count;
  flat /= axes[2].count;
  idx[1] = flat % axes[1].count;
  idx[0] = flat / axes[1].count;
  return idx;
}

std::vector<std::array<std::size_t, 3>> PatchGrid::all_indices() const {
  std::vector<std::array<std::size_t, 3>> out;
  out.reserve(total());
  for (std::size_t f = 0; f < total(); ++f) out.push_back(index_at(f));
  return out;
}

std::array<long, 3> PatchGrid::patch_start(const std::array<std::size_t, 3>& index) const {
  std::array<long, 3> start;
  for (int a = 0; a < 3; ++a) {
    if (index[a] >= axes[a].count) {
      throw std::out_of_range("patch index " + std::to_string(index[a]) + " out of range on axis " +
                              std::to_string(a));
    }
    start[a] = axes[a].first_start + static_cast<long>(index[a]) * axes[a].step;
  }
  return start;
}

PatchGrid plan_patches(const BrainCube& cube, const Extents& patch_shape,
                       const Extents& volume_extents) {
  if (patch_shape.size() != 3 || volume_extents.size() != 3) {
    throw std::invalid_argument("plan_patches: patch shape and volume extents must have 3 axes");
  }
  PatchGrid grid;
  grid.cube = cube;
  grid.volume = volume_extents;
  for (int a = 0; a < 3; ++a) {
    const long lb = static_cast<long>(cube.length[a]);
    const long lp = static_cast<long>(patch_shape[a]);
    if (lp < 1) throw std::invalid_argument("plan_patches: patch extents must be >= 1");
    const long cs = static_cast<long>(cube.start[a]);
    AxisPlan& ax = grid.axes[a];
    ax.patch_len = static_cast<std::size_t>(lp);
    if (lb > lp) {
      const long np = (lb + lp - 1) / lp;
      const long lo = (np * lp - lb) / (np - 1);
      ax.count = static_cast<std::size_t>(np);
      ax.first_start = cs - (np * lp - lo * (np - 1) - lb) / 2;
      ax.step = lp - lo;
    } else {
      ax.count = 1;
      ax.first_start = cs - (lp - lb) / 2;
      ax.step = lp;
    }
  }
  return grid;
}

DenseTensor extract_patch(const DenseTensor& volume, const PatchGrid& grid,
                          const std::array<std::size_t, 3>& index) {
  if (volume.rank() != 4) {
    throw std::invalid_argument("extract_patch: volume must be [c,Ds,Dc,Da]");
  }
  for (int a = 0; a < 3; ++a) {
    if (volume.shape[a + 1] != grid.volume[a]) {
      throw std::invalid_argument("extract_patch: volume extents differ from the grid's");
    }
  }
  const std::array<long, 3> start = grid.patch_start(index);
  const std::size_t c = volume.shape[0];
  const long D0 = static_cast<long>(grid.volume[0]);
  const long D1 = static_cast<long>(grid.volume[1]);
  const long D2 = static_cast<long>(grid.volume[2]);
  const long P0 = static_cast<long>(grid.axes[0].patch_len);
  const long P1 = static_cast<long>(grid.axes[1].patch_len);
  const long P2 = static_cast<long>(grid.axes[2].patch_len);

  DenseTensor out({c, static_cast<std::size_t>(P0), static_cast<std::size_t>(P1),
                   static_cast<std::size_t>(P2)});
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* src = volume.data.data() + ch * static_cast<std::size_t>(D0 * D1 * D2);
    double* dst = out.data.data() + ch * static_cast<std::size_t>(P0 * P1 * P2);
    for (long i = 0; i < P0; ++i) {
      const long si = start[0] + i;
      if (si < 0 || si >= D0) continue;
      for (long j = 0; j < P1; ++j) {
        const long sj = start[1] + j;
        if (sj < 0 || sj >= D1) continue;
        const long k_lo = std::max(0L, -start[2]);
        const long k_hi = std::min(P2, D2 - start[2]);
        for (long k = k_lo; k < k_hi; ++k) {
          dst[(i * P1 + j) * P2 + k] = src[(si * D1 + sj) * D2 + start[2] + k];
        }
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> extract_label_patch(const std::vector<std::uint8_t>& label,
                                              const PatchGrid& grid,
                                              const std::array<std::size_t, 3>& index) {
  const std::size_t n = grid.volume[0] * grid.volume[1] * grid.volume[2];
  if (label.size() != n) {
    throw std::invalid_argument("extract_label_patch: label size differs from the grid's volume");
  }
  const std::array<long, 3> start = grid.patch_start(index);
  const long D0 = static_cast<long>(grid.volume[0]);
  const long D1 = static_cast<long>(grid.volume[1]);
  const long D2 = static_cast<long>(grid.volume[2]);
  const long P0 = static_cast<long>(grid.axes[0].patch_len);
  const long P1 = static_cast<long>(grid.axes[1].patch_len);
  const long P2 = static_cast<long>(grid.axes[2].patch_len);

  std::vector<std::uint8_t> out(static_cast<std::size_t>(P0 * P1 * P2), 0);
  for (long i = 0; i < P0; ++i) {
    const long si = start[0] + i;
    if (si < 0 || si >= D0) continue;
    for (long j = 0; j < P1; ++j) {
      const long sj = start[1] + j;
      if (sj < 0 || sj >= D1) continue;
      for (long k = 0; k < P2; ++k) {
        const long sk = start[2] + k;
        if (sk < 0 || sk >= D2) continue;
        out[static_cast<std::size_t>((i * P1 + j) * P2 + k)] =
            label[static_cast<std::size_t>((si * D1 + sj) * D2 + sk)];
      }
    }
  }
  return out;
}

DenseTensor stitch(const std::vector<std::pair<std::array<std::size_t, 3>, DenseTensor>>& patches,
                   const PatchGrid& grid) {
  if (patches.empty()) throw std::invalid_argument("stitch: no patches");
  const std::size_t c = patches.front().second.shape[0];
  std::set<std::array<std::size_t, 3>> seen;
  for (const auto& [idx, p] : patches) {
    if (p.rank() != 4 || p.shape[0] != c || p.shape[1] != grid.axes[0].patch_len ||
        p.shape[2] != grid.axes[1].patch_len || p.shape[3] != grid.axes[2].patch_len) {
      throw std::invalid_argument("stitch: patch shape does not match the grid");
    }
    if (!seen.insert(idx).second) throw std::invalid_argument("stitch: duplicate patch index");
  }
  if (seen.size() != grid.total()) throw std::invalid_argument("stitch: missing patch indices");

  const long D0 = static_cast<long>(grid.volume[0]);
  const long D1 = static_cast<long>(grid.volume[1]);
  const long D2 = static_cast<long>(grid.volume[2]);
  const std::size_t n = static_cast<std::size_t>(D0 * D1 * D2);
  DenseTensor out({c, grid.volume[0], grid.volume[1], grid.volume[2]});
  std::vector<std::uint32_t> cover(n, 0);

  const long P0 = static_cast<long>(grid.axes[0].patch_len);
  const long P1 = static_cast<long>(grid.axes[1].patch_len);
  const long P2 = static_cast<long>(grid.axes[2].patch_len);
  for (const auto& [idx, p] : patches) {
    const std::array<long, 3> start = grid.patch_start(idx);
    for (long i = 0; i < P0; ++i) {
      const long si = start[0] + i;
      if (si < 0 || si >= D0) continue;
      for (long j = 0; j < P1; ++j) {
        const long sj = start[1] + j;
        if (sj < 0 || sj >= D1) continue;
        for (long k = 0; k < P2; ++k) {
          const long sk = start[2] + k;
          if (sk < 0 || sk >= D2) continue;
          const std::size_t dv = static_cast<std::size_t>((si * D1 + sj) * D2 + sk);
          const std::size_t sv = static_cast<std::size_t>((i * P1 + j) * P2 + k);
          for (std::size_t ch = 0; ch < c; ++ch) {
            out.data[ch * n + dv] += p.data[ch * static_cast<std::size_t>(P0 * P1 * P2) + sv];
          }
          ++cover[dv];
        }
      }
    }
  }
  for (std::size_t v = 0; v < n; ++v) {
    if (cover[v] <= 1) continue;
    const double inv = 1.0 / static_cast<double>(cover[v]);
    for (std::size_t ch = 0; ch < c; ++ch) out.data[ch * n + v] *= inv;
  }
  return out;
}

}  // namespace voxnas
