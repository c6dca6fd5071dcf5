#include <array>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "support.hpp"
#include "voxnas/patching.hpp"

using namespace voxnas;
using namespace voxnas::testing;

namespace {

BrainCube cube1d(std::size_t start, std::size_t len) {
  BrainCube c;
  c.start = {start, 0, 0};
  c.length = {len, 1, 1};
  return c;
}

}  // namespace

TEST_CASE("plan_patches: 150-voxel cube with 64-voxel patches") {
  PatchGrid g = plan_patches(cube1d(10, 150), {64, 1, 1}, {200, 1, 1});
  CHECK(g.axes[0].count == 3);
  CHECK(g.axes[0].patch_len == 64);
  CHECK(g.axes[0].first_start == 10);  // zero offset from the cube start
  CHECK(g.axes[0].step == 43);         // l_p - l_o with l_o = 21
}

TEST_CASE("plan_patches: exact fit and centered degenerate branch") {
  PatchGrid g = plan_patches(cube1d(5, 64), {64, 1, 1}, {100, 1, 1});
  CHECK(g.axes[0].count == 1);
  CHECK(g.axes[0].first_start == 5);

  PatchGrid h = plan_patches(cube1d(7, 3), {8, 1, 1}, {20, 1, 1});
  CHECK(h.axes[0].count == 1);
  CHECK(h.axes[0].first_start == 5);  // 3-voxel cube centered in an 8-voxel patch
}

TEST_CASE("plan_patches: clinical-scale volume yields 27 patches, 9 per slice") {
  BrainCube cube;
  cube.start = {40, 45, 10};
  cube.length = {150, 150, 130};
  PatchGrid g = plan_patches(cube, {64, 64, 64}, {240, 240, 155});
  CHECK(g.total() == 27);
  CHECK(g.axes[1].count * g.axes[2].count == 9);
}

TEST_CASE("plan_patches: exhaustive sweep of coverage, minimality, symmetry") {
  for (std::size_t lb = 1; lb <= 256; ++lb) {
    for (std::size_t lp = 1; lp <= 128; ++lp) {
      const std::size_t cs = 300;
      PatchGrid g = plan_patches(cube1d(cs, lb), {lp, 1, 1}, {1000, 1, 1});
      const AxisPlan& ax = g.axes[0];
      if (lb > lp) {
        const std::size_t expect_np = (lb + lp - 1) / lp;
        REQUIRE(ax.count == expect_np);
      } else {
        REQUIRE(ax.count == 1);
      }

      std::vector<char> covered(lb, 0);
      long right_end = 0;
      for (std::size_t t = 0; t < ax.count; ++t) {
        const long s = ax.first_start + static_cast<long>(t) * ax.step;
        right_end = s + static_cast<long>(ax.patch_len);
        for (long p = s; p < right_end; ++p) {
          const long rel = p - static_cast<long>(cs);
          if (rel >= 0 && rel < static_cast<long>(lb)) covered[static_cast<std::size_t>(rel)] = 1;
        }
      }
      for (std::size_t i = 0; i < lb; ++i) REQUIRE(covered[i] == 1);

      const long left_overhang = static_cast<long>(cs) - ax.first_start;
      const long right_overhang = right_end - static_cast<long>(cs + lb);
      REQUIRE(left_overhang >= 0);
      REQUIRE(right_overhang >= 0);
      REQUIRE(std::abs(left_overhang - right_overhang) <= 1);
    }
  }
}

TEST_CASE("extract_patch: interior slice identity and negative-start padding") {
  Rng rng(52);
  DenseTensor vol = random_tensor({2, 10, 10, 10}, rng);
  BrainCube cube;
  cube.start = {2, 2, 2};
  cube.length = {4, 4, 4};
  PatchGrid g = plan_patches(cube, {4, 4, 4}, {10, 10, 10});
  DenseTensor p = extract_patch(vol, g, {0, 0, 0});
  REQUIRE(p.shape == Extents{2, 4, 4, 4});
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 4; ++j) {
        for (std::size_t k = 0; k < 4; ++k) {
          CHECK(p.data[((c * 4 + i) * 4 + j) * 4 + k] ==
                vol.data[((c * 10 + i + 2) * 10 + j + 2) * 10 + k + 2]);
        }
      }
    }
  }

  // full-volume cube with an oversized patch: first start is -2
  DenseTensor small({1, 4, 4, 4}, 1.0);
  BrainCube full;
  full.start = {0, 0, 0};
  full.length = {4, 4, 4};
  PatchGrid go = plan_patches(full, {8, 8, 8}, {4, 4, 4});
  CHECK(go.axes[0].first_start == -2);
  DenseTensor q = extract_patch(small, go, {0, 0, 0});
  for (std::size_t j = 0; j < 8; ++j) {
    for (std::size_t k = 0; k < 8; ++k) {
      CHECK(q.data[(0 * 8 + j) * 8 + k] == 0.0);
      CHECK(q.data[(1 * 8 + j) * 8 + k] == 0.0);
    }
  }
  CHECK(q.data[((2 * 8 + 2) * 8 + 2)] == 1.0);

  CHECK_THROWS_AS(extract_patch(small, go, {1, 0, 0}), std::out_of_range);
}

TEST_CASE("extract_label_patch matches the image path on shared coordinates") {
  VolumeCase c = synth_phantom(19, {20, 20, 20}, 1);
  BrainCube cube = detect_brain_cube(c);
  PatchGrid g = plan_patches(cube, {8, 8, 8}, c.spatial());
  for (const auto& idx : g.all_indices()) {
    std::vector<std::uint8_t> lp = extract_label_patch(c.label, g, idx);
    const std::array<long, 3> start = g.patch_start(idx);
    for (long i = 0; i < 8; ++i) {
      for (long j = 0; j < 8; ++j) {
        for (long k = 0; k < 8; ++k) {
          const long si = start[0] + i, sj = start[1] + j, sk = start[2] + k;
          std::uint8_t expect = 0;
          if (si >= 0 && si < 20 && sj >= 0 && sj < 20 && sk >= 0 && sk < 20) {
            expect = c.label[static_cast<std::size_t>((si * 20 + sj) * 20 + sk)];
          }
          REQUIRE(lp[static_cast<std::size_t>((i * 8 + j) * 8 + k)] == expect);
        }
      }
    }
  }
}

TEST_CASE("stitch: overlap averaging on a crafted two-patch grid") {
  BrainCube cube = cube1d(2, 6);
  PatchGrid g = plan_patches(cube, {4, 1, 1}, {10, 1, 1});
  REQUIRE(g.axes[0].count == 2);
  REQUIRE(g.axes[0].first_start == 2);
  REQUIRE(g.axes[0].step == 2);

  std::vector<std::pair<std::array<std::size_t, 3>, DenseTensor>> patches;
  patches.push_back({{0, 0, 0}, DenseTensor({1, 4, 1, 1}, 1.0)});
  patches.push_back({{1, 0, 0}, DenseTensor({1, 4, 1, 1}, 3.0)});
  DenseTensor out = stitch(patches, g);
  REQUIRE(out.shape == Extents{1, 10, 1, 1});
  CHECK(out.data[0] == 0.0);  // uncovered
  CHECK(out.data[2] == 1.0);
  CHECK(out.data[3] == 1.0);
  CHECK(out.data[4] == 2.0);  // overlap of 1 and 3
  CHECK(out.data[5] == 2.0);
  CHECK(out.data[6] == 3.0);
  CHECK(out.data[7] == 3.0);
  CHECK(out.data[8] == 0.0);

  std::vector<std::pair<std::array<std::size_t, 3>, DenseTensor>> dup = patches;
  dup[1].first = {0, 0, 0};
  CHECK_THROWS_AS(stitch(dup, g), std::invalid_argument);
  patches.pop_back();
  CHECK_THROWS_AS(stitch(patches, g), std::invalid_argument);
}

TEST_CASE("stitch(extract_all) is exact on the brain cube for 50 random volumes") {
  Rng rng(1234);
  for (int trial = 0; trial < 50; ++trial) {
    auto draw = [&](int lo, int hi) { return static_cast<std::size_t>(rng.uniform_int(lo, hi)); };
    Extents dims{draw(8, 24), draw(8, 24), draw(8, 24)};
    const std::size_t channels = draw(1, 3);
    DenseTensor vol({channels, dims[0], dims[1], dims[2]});
    // dyadic values keep overlap sums and the count division exact
    for (double& v : vol.data) {
      v = static_cast<double>(rng.uniform_int(0, 1 << 20)) / 64.0;
    }
    BrainCube cube;
    for (int a = 0; a < 3; ++a) {
      cube.start[a] = rng.uniform_int(0, dims[a] - 1);
      cube.length[a] = rng.uniform_int(1, dims[a] - cube.start[a]);
    }
    Extents patch{draw(2, 12), draw(2, 12), draw(2, 12)};
    PatchGrid g = plan_patches(cube, patch, dims);

    std::vector<std::pair<std::array<std::size_t, 3>, DenseTensor>> patches;
    for (const auto& idx : g.all_indices()) {
      patches.push_back({idx, extract_patch(vol, g, idx)});
    }
    DenseTensor out = stitch(patches, g);
    const std::size_t n = dims[0] * dims[1] * dims[2];
    for (std::size_t i = cube.start[0]; i < cube.start[0] + cube.length[0]; ++i) {
      for (std::size_t j = cube.start[1]; j < cube.start[1] + cube.length[1]; ++j) {
        for (std::size_t k = cube.start[2]; k < cube.start[2] + cube.length[2]; ++k) {
          const std::size_t v = (i * dims[1] + j) * dims[2] + k;
          for (std::size_t c = 0; c < channels; ++c) {
            REQUIRE(out.data[c * n + v] == vol.data[c * n + v]);
          }
        }
      }
    }
  }
}
