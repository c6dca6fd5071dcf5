#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "support.hpp"
#include "voxnas/ops.hpp"

using namespace voxnas;
using namespace voxnas::testing;

namespace {

// Weighted sum against fixed coefficients turns any op output into a scalar
// objective without flattening its gradient structure.
NodeId probe_scalar(Tape& t, NodeId y, const DenseTensor& coeffs) {
  NodeId c = t.constant(coeffs);
  NodeId prod = t.record(
      [&] {
        DenseTensor out(t.val(y).shape);
        for (std::size_t i = 0; i < out.numel(); ++i) {
          out.data[i] = t.val(y).data[i] * coeffs.data[i];
        }
        return out;
      }(),
      [y, c](Tape& tp, NodeId self) {
        const DenseTensor& gy = tp.grad(self);
        DenseTensor& g = tp.grad(y);
        for (std::size_t i = 0; i < g.numel(); ++i) g.data[i] += gy.data[i] * tp.val(c).data[i];
      });
  return sum_all(t, prod);
}

DenseTensor coeffs_for(const Extents& shape, Rng& rng) {
  DenseTensor c(shape);
  for (double& v : c.data) v = rng.uniform(-1.0, 1.0);
  return c;
}

}  // namespace

TEST_CASE("conv3d: identity 1x1x1 kernel is exact identity") {
  Rng rng(11);
  DenseTensor x = random_tensor({3, 4, 4, 4}, rng);
  DenseTensor w({3, 3, 1, 1, 1}, 0.0);
  for (int c = 0; c < 3; ++c) w.data[(c * 3 + c)] = 1.0;
  Tape t;
  NodeId y = conv3d(t, t.constant(x), t.constant(w), ConvGeom{1, 1, 0});
  const DenseTensor& yv = t.val(y);
  REQUIRE(yv.same_shape(x));
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(yv.data[i] == x.data[i]);
}

TEST_CASE("conv3d: all-ones 3^3 input and kernel give 27 at the center") {
  DenseTensor x({1, 3, 3, 3}, 1.0);
  DenseTensor w({1, 1, 3, 3, 3}, 1.0);
  Tape t;
  NodeId y = conv3d(t, t.constant(x), t.constant(w), ConvGeom{1, 1, 1});
  const DenseTensor& yv = t.val(y);
  REQUIRE(yv.shape == Extents{1, 3, 3, 3});
  CHECK(yv.data[(1 * 3 + 1) * 3 + 1] == doctest::Approx(27.0));
}

TEST_CASE("conv3d: stride-2 shape arithmetic") {
  Tape t;
  NodeId x = t.constant(DenseTensor({2, 8, 8, 8}, 0.5));
  NodeId w = t.constant(DenseTensor({3, 2, 3, 3, 3}, 0.1));
  NodeId y = conv3d(t, x, w, ConvGeom{2, 1, 1});
  CHECK(t.val(y).shape == Extents{3, 4, 4, 4});
}

TEST_CASE("conv3d: channel mismatch is a hard error") {
  Tape t;
  NodeId x = t.constant(DenseTensor({2, 4, 4, 4}, 1.0));
  NodeId w = t.constant(DenseTensor({3, 4, 3, 3, 3}, 1.0));
  CHECK_THROWS_AS(conv3d(t, x, w, ConvGeom{1, 1, 1}), std::invalid_argument);
}

TEST_CASE("conv3d gradients match finite differences") {
  Rng rng(23);
  for (auto [stride, dilation, padding] : {std::tuple{1, 1, 1}, {2, 1, 1}, {1, 2, 2}, {2, 2, 2}}) {
    DenseTensor x = random_tensor({2, 4, 4, 4}, rng);
    DenseTensor w = random_tensor({3, 2, 3, 3, 3}, rng, -0.5, 0.5);
    ConvGeom g{stride, dilation, padding};
    Extents out_shape{3, conv_out_extent(4, 3, g), conv_out_extent(4, 3, g),
                      conv_out_extent(4, 3, g)};
    DenseTensor c = coeffs_for(out_shape, rng);
    auto res = grad_check(
        [&](Tape& t, const std::vector<NodeId>& in) {
          return probe_scalar(t, conv3d(t, in[0], in[1], g), c);
        },
        {x, w});
    CAPTURE(stride);
    CAPTURE(dilation);
    CHECK(res.max_rel_err < 1e-4);
  }
}

TEST_CASE("conv3d_transposed: shape doubling and zero input") {
  Rng rng(31);
  DenseTensor x({2, 4, 4, 4}, 0.0);
  DenseTensor w = random_tensor({2, 3, 3, 3, 3}, rng);
  Tape t;
  NodeId y = conv3d_transposed(t, t.constant(x), t.constant(w), ConvGeom{2, 1, 1}, 1);
  CHECK(t.val(y).shape == Extents{3, 8, 8, 8});
  for (double v : t.val(y).data) CHECK(v == 0.0);
}

TEST_CASE("conv3d_transposed rejects non-doubling geometry") {
  Tape t;
  NodeId x = t.constant(DenseTensor({1, 4, 4, 4}, 1.0));
  NodeId w = t.constant(DenseTensor({1, 1, 3, 3, 3}, 1.0));
  CHECK_THROWS_AS(conv3d_transposed(t, x, w, ConvGeom{1, 1, 1}, 0), std::invalid_argument);
  CHECK_THROWS_AS(conv3d_transposed(t, x, w, ConvGeom{2, 1, 0}, 1), std::invalid_argument);
}

TEST_CASE("conv3d_transposed is the adjoint of the stride-2 conv") {
  // <conv(x), y> == <x, conv_transposed(y)> for shared weights, which is the
  // defining property; checked on random tensors.
  Rng rng(37);
  DenseTensor x = random_tensor({2, 8, 8, 8}, rng);
  DenseTensor y = random_tensor({3, 4, 4, 4}, rng);
  DenseTensor w = random_tensor({3, 2, 3, 3, 3}, rng);  // conv layout [Co,Ci,k^3]
  // transposed layout [Cin,Cout,k^3] with Cin = conv's Co: same memory layout
  DenseTensor wt({3, 2, 3, 3, 3}, w.data);
  Tape t;
  NodeId cx = conv3d(t, t.constant(x), t.constant(w), ConvGeom{2, 1, 1});
  NodeId ty = conv3d_transposed(t, t.constant(y), t.constant(wt), ConvGeom{2, 1, 1}, 1);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < y.numel(); ++i) lhs += t.val(cx).data[i] * y.data[i];
  for (std::size_t i = 0; i < x.numel(); ++i) rhs += t.val(ty).data[i] * x.data[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}

TEST_CASE("conv3d_transposed gradients match finite differences") {
  Rng rng(41);
  for (auto [dilation, padding] : {std::pair{1, 1}, {2, 2}}) {
    DenseTensor x = random_tensor({2, 3, 3, 3}, rng);
    DenseTensor w = random_tensor({2, 2, 3, 3, 3}, rng, -0.5, 0.5);
    ConvGeom g{2, dilation, padding};
    DenseTensor c = coeffs_for({2, 6, 6, 6}, rng);
    auto res = grad_check(
        [&](Tape& t, const std::vector<NodeId>& in) {
          return probe_scalar(t, conv3d_transposed(t, in[0], in[1], g, 1), c);
        },
        {x, w});
    CAPTURE(dilation);
    CHECK(res.max_rel_err < 1e-4);
  }
}

TEST_CASE("depthwise separable equals the explicit two-stage oracle") {
  Rng rng(43);
  DenseTensor x = random_tensor({2, 4, 4, 4}, rng);
  DenseTensor dw = random_tensor({2, 1, 3, 3, 3}, rng);
  DenseTensor pw = random_tensor({2, 2, 1, 1, 1}, rng);

  Tape t;
  NodeId mid = conv3d_depthwise(t, t.constant(x), t.constant(dw), ConvGeom{1, 1, 1});
  NodeId y = conv3d(t, mid, t.constant(pw), ConvGeom{1, 1, 0});

  // direct loop oracle: depthwise then pointwise, written independently
  auto idx = [](int c, int i, int j, int k) { return ((c * 4 + i) * 4 + j) * 4 + k; };
  DenseTensor stage1({2, 4, 4, 4});
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        for (int k = 0; k < 4; ++k) {
          double acc = 0.0;
          for (int a = -1; a <= 1; ++a) {
            for (int b = -1; b <= 1; ++b) {
              for (int d = -1; d <= 1; ++d) {
                const int ii = i + a, jj = j + b, kk = k + d;
                if (ii < 0 || ii >= 4 || jj < 0 || jj >= 4 || kk < 0 || kk >= 4) continue;
                acc += x.data[idx(c, ii, jj, kk)] *
                       dw.data[(c * 27) + ((a + 1) * 3 + (b + 1)) * 3 + (d + 1)];
              }
            }
          }
          stage1.data[idx(c, i, j, k)] = acc;
        }
      }
    }
  }
  for (int co = 0; co < 2; ++co) {
    for (int v = 0; v < 64; ++v) {
      double acc = 0.0;
      for (int ci = 0; ci < 2; ++ci) {
        acc += pw.data[co * 2 + ci] * stage1.data[ci * 64 + v];
      }
      CHECK(std::abs(t.val(y).data[co * 64 + v] - acc) < 1e-10);
    }
  }
}

TEST_CASE("depthwise separable: single-channel case equals plain conv") {
  Rng rng(47);
  DenseTensor x = random_tensor({1, 4, 4, 4}, rng);
  DenseTensor dw = random_tensor({1, 1, 3, 3, 3}, rng);
  const double pw_scalar = 1.7;
  DenseTensor pw({1, 1, 1, 1, 1}, {pw_scalar});
  // composed kernel = depthwise (x) pointwise scalar
  DenseTensor composed({1, 1, 3, 3, 3});
  for (int i = 0; i < 27; ++i) composed.data[i] = dw.data[i] * pw_scalar;

  Tape t;
  NodeId a = conv3d(t, conv3d_depthwise(t, t.constant(x), t.constant(dw), ConvGeom{1, 1, 1}),
                    t.constant(pw), ConvGeom{1, 1, 0});
  NodeId b = conv3d(t, t.constant(x), t.constant(composed), ConvGeom{1, 1, 1});
  for (std::size_t i = 0; i < x.numel(); ++i) {
    CHECK(std::abs(t.val(a).data[i] - t.val(b).data[i]) < 1e-12);
  }
}

TEST_CASE("depthwise separable: zero pointwise weights give zero output") {
  Rng rng(53);
  DenseTensor x = random_tensor({2, 4, 4, 4}, rng);
  DenseTensor dw = random_tensor({2, 1, 3, 3, 3}, rng);
  DenseTensor pw({2, 2, 1, 1, 1}, 0.0);
  Tape t;
  NodeId y = conv3d(t, conv3d_depthwise(t, t.constant(x), t.constant(dw), ConvGeom{1, 1, 1}),
                    t.constant(pw), ConvGeom{1, 1, 0});
  for (double v : t.val(y).data) CHECK(v == 0.0);
}

TEST_CASE("depthwise conv gradients match finite differences") {
  Rng rng(59);
  for (int stride : {1, 2}) {
    DenseTensor x = random_tensor({3, 4, 4, 4}, rng);
    DenseTensor w = random_tensor({3, 1, 3, 3, 3}, rng);
    ConvGeom g{stride, 1, 1};
    const std::size_t oe = conv_out_extent(4, 3, g);
    DenseTensor c = coeffs_for({3, oe, oe, oe}, rng);
    auto res = grad_check(
        [&](Tape& t, const std::vector<NodeId>& in) {
          return probe_scalar(t, conv3d_depthwise(t, in[0], in[1], g), c);
        },
        {x, w});
    CHECK(res.max_rel_err < 1e-4);
  }
}

TEST_CASE("transposed depthwise gradients match finite differences") {
  Rng rng(61);
  DenseTensor x = random_tensor({2, 3, 3, 3}, rng);
  DenseTensor w = random_tensor({2, 1, 3, 3, 3}, rng);
  DenseTensor c = coeffs_for({2, 6, 6, 6}, rng);
  auto res = grad_check(
      [&](Tape& t, const std::vector<NodeId>& in) {
        return probe_scalar(t, conv3d_transposed_depthwise(t, in[0], in[1], ConvGeom{2, 1, 1}, 1),
                            c);
      },
      {x, w});
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("pool3d: constant input, shapes, and the window-scan oracle") {
  Tape t;
  NodeId c8 = t.constant(DenseTensor({1, 8, 8, 8}, 3.25));
  for (PoolMode mode : {PoolMode::kMax, PoolMode::kAvg}) {
    NodeId y = pool3d(t, c8, mode);
    CHECK(t.val(y).shape == Extents{1, 4, 4, 4});
    // interior voxels of a constant input keep the constant in both modes
    CHECK(t.val(y).data[(1 * 4 + 1) * 4 + 1] == doctest::Approx(3.25));
    CHECK(t.val(y).data[(2 * 4 + 2) * 4 + 2] == doctest::Approx(3.25));
  }

  // distinct values: max output equals a direct window scan
  Rng rng(67);
  DenseTensor x({1, 4, 4, 4});
  for (std::size_t i = 0; i < 64; ++i) x.data[i] = static_cast<double>(i * 7 % 64);
  NodeId y = pool3d(t, t.constant(x), PoolMode::kMax);
  const DenseTensor& yv = t.val(y);
  REQUIRE(yv.shape == Extents{1, 2, 2, 2});
  for (int ox = 0; ox < 2; ++ox) {
    for (int oy = 0; oy < 2; ++oy) {
      for (int oz = 0; oz < 2; ++oz) {
        double best = -1e300;
        for (int ix = ox * 2 - 1; ix <= ox * 2 + 1; ++ix) {
          for (int iy = oy * 2 - 1; iy <= oy * 2 + 1; ++iy) {
            for (int iz = oz * 2 - 1; iz <= oz * 2 + 1; ++iz) {
              if (ix < 0 || ix >= 4 || iy < 0 || iy >= 4 || iz < 0 || iz >= 4) continue;
              best = std::max(best, x.data[(ix * 4 + iy) * 4 + iz]);
            }
          }
        }
        CHECK(yv.data[(ox * 2 + oy) * 2 + oz] == doctest::Approx(best));
      }
    }
  }
}

TEST_CASE("pool3d gradients match finite differences") {
  Rng rng(71);
  for (PoolMode mode : {PoolMode::kMax, PoolMode::kAvg}) {
    // distinct magnitudes keep the argmax stable under the probe step
    DenseTensor x({2, 4, 4, 4});
    for (std::size_t i = 0; i < x.numel(); ++i) {
      x.data[i] = static_cast<double>((i * 37) % 128) / 16.0 + rng.uniform(0.0, 1e-3);
    }
    DenseTensor c = coeffs_for({2, 2, 2, 2}, rng);
    auto res = grad_check(
        [&](Tape& t, const std::vector<NodeId>& in) {
          return probe_scalar(t, pool3d(t, in[0], mode), c);
        },
        {x});
    CHECK(res.max_rel_err < 1e-4);
  }
}

TEST_CASE("group_norm: constant input and affine-only cases") {
  Tape t;
  NodeId x = t.constant(DenseTensor({4, 2, 2, 2}, 5.0));
  NodeId gamma1 = t.constant(DenseTensor({4}, 1.0));
  NodeId beta0 = t.constant(DenseTensor({4}, 0.0));
  NodeId y = group_norm(t, x, gamma1, beta0, 4);
  for (double v : t.val(y).data) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));

  NodeId gamma0 = t.constant(DenseTensor({4}, 0.0));
  NodeId beta5 = t.constant(DenseTensor({4}, 5.0));
  NodeId y2 = group_norm(t, x, gamma0, beta5, 4);
  for (double v : t.val(y2).data) CHECK(v == doctest::Approx(5.0));
}

TEST_CASE("group_norm rejects groups that do not divide channels") {
  Tape t;
  NodeId x = t.constant(DenseTensor({4, 2, 2, 2}, 1.0));
  NodeId g = t.constant(DenseTensor({4}, 1.0));
  CHECK_THROWS_AS(group_norm(t, x, g, g, 3), std::invalid_argument);
}

TEST_CASE("group_norm standardizes each group (moments oracle)") {
  Rng rng(73);
  // magnitude ~10 inputs so the eps term is negligible against the variance
  DenseTensor x = random_tensor({4, 3, 3, 3}, rng, -10.0, 10.0);
  Tape t;
  NodeId y = group_norm(t, t.constant(x), t.constant(DenseTensor({4}, 1.0)),
                        t.constant(DenseTensor({4}, 0.0)), 4);
  const DenseTensor& yv = t.val(y);
  for (int c = 0; c < 4; ++c) {
    double m = 0.0, v = 0.0;
    for (int i = 0; i < 27; ++i) m += yv.data[c * 27 + i];
    m /= 27.0;
    for (int i = 0; i < 27; ++i) {
      const double d = yv.data[c * 27 + i] - m;
      v += d * d;
    }
    v /= 27.0;
    CHECK(std::abs(m) < 1e-8);
    CHECK(std::abs(v - 1.0) < 1e-6);
  }

  // moments against a direct computation of the normalization itself
  for (int c = 0; c < 4; ++c) {
    double m = 0.0, var = 0.0;
    for (int i = 0; i < 27; ++i) m += x.data[c * 27 + i];
    m /= 27.0;
    for (int i = 0; i < 27; ++i) {
      const double d = x.data[c * 27 + i] - m;
      var += d * d;
    }
    var /= 27.0;
    for (int i = 0; i < 27; ++i) {
      const double expect = (x.data[c * 27 + i] - m) / std::sqrt(var + 1e-5);
      CHECK(yv.data[c * 27 + i] == doctest::Approx(expect).epsilon(1e-10));
    }
  }
}

TEST_CASE("group_norm gradients match finite differences") {
  Rng rng(79);
  for (std::size_t groups : {1u, 2u, 4u}) {
    DenseTensor x = random_tensor({4, 3, 3, 3}, rng, -2.0, 2.0);
    DenseTensor gamma = random_tensor({4}, rng, 0.5, 1.5);
    DenseTensor beta = random_tensor({4}, rng, -0.5, 0.5);
    DenseTensor c = coeffs_for({4, 3, 3, 3}, rng);
    auto res = grad_check(
        [&](Tape& t, const std::vector<NodeId>& in) {
          return probe_scalar(t, group_norm(t, in[0], in[1], in[2], groups), c);
        },
        {x, gamma, beta});
    CAPTURE(groups);
    CHECK(res.max_rel_err < 1e-4);
  }
}

TEST_CASE("se gate: open-gate limit, fixed gate, and zero input") {
  Rng rng(83);
  DenseTensor x = random_tensor({4, 3, 3, 3}, rng);
  DenseTensor w1({2, 4}, 0.0), b1({2}, 0.0);
  DenseTensor w2({4, 2}, 0.0);

  Tape t;
  // biases forced high: sigmoid ~= 1, output ~= input
  NodeId y_open = se_gate_apply(t, t.constant(x), t.constant(w1), t.constant(b1),
                                t.constant(w2), t.constant(DenseTensor({4}, 40.0)));
  for (std::size_t i = 0; i < x.numel(); ++i) {
    CHECK(t.val(y_open).data[i] == doctest::Approx(x.data[i]).epsilon(1e-10));
  }

  // zero bias: sigmoid(0) = 0.5 on every channel
  NodeId y_half = se_gate_apply(t, t.constant(x), t.constant(w1), t.constant(b1),
                                t.constant(w2), t.constant(DenseTensor({4}, 0.0)));
  for (std::size_t i = 0; i < x.numel(); ++i) {
    CHECK(t.val(y_half).data[i] == doctest::Approx(0.5 * x.data[i]).epsilon(1e-12));
  }

  // zero input: gate value irrelevant
  NodeId y_zero = se_gate_apply(t, t.constant(DenseTensor({4, 3, 3, 3}, 0.0)), t.constant(w1),
                                t.constant(b1), t.constant(w2), t.constant(DenseTensor({4}, 0.0)));
  for (double v : t.val(y_zero).data) CHECK(v == 0.0);
}

TEST_CASE("se gate gradients match finite differences") {
  Rng rng(89);
  DenseTensor x = random_tensor({4, 3, 3, 3}, rng);
  DenseTensor w1 = random_tensor({2, 4}, rng, -0.5, 0.5);
  DenseTensor b1 = random_tensor({2}, rng, -0.2, 0.2);
  DenseTensor w2 = random_tensor({4, 2}, rng, -0.5, 0.5);
  DenseTensor b2 = random_tensor({4}, rng, -0.2, 0.2);
  DenseTensor c = coeffs_for({4, 3, 3, 3}, rng);
  auto res = grad_check(
      [&](Tape& t, const std::vector<NodeId>& in) {
        return probe_scalar(t, se_gate_apply(t, in[0], in[1], in[2], in[3], in[4]), c);
      },
      {x, w1, b1, w2, b2});
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("softmax/weighted_sum/sigmoid/relu gradients match finite differences") {
  Rng rng(97);
  {
    DenseTensor v = random_tensor({6}, rng, -2.0, 2.0);
    DenseTensor c = coeffs_for({6}, rng);
    auto res = grad_check(
        [&](Tape& t, const std::vector<NodeId>& in) {
          return probe_scalar(t, softmax(t, in[0]), c);
        },
        {v});
    CHECK(res.max_rel_err < 1e-4);
  }
  {
    DenseTensor a = random_tensor({2, 3, 3, 3}, rng);
    DenseTensor b = random_tensor({2, 3, 3, 3}, rng);
    DenseTensor w = random_tensor({2}, rng, 0.1, 0.9);
    DenseTensor c = coeffs_for({2, 3, 3, 3}, rng);
    auto res = grad_check(
        [&](Tape& t, const std::vector<NodeId>& in) {
          return probe_scalar(t, weighted_sum(t, {in[0], in[1]}, in[2]), c);
        },
        {a, b, w});
    CHECK(res.max_rel_err < 1e-4);
  }
  {
    DenseTensor x = random_tensor_nonzero({2, 3, 3, 3}, rng);
    DenseTensor c = coeffs_for({2, 3, 3, 3}, rng);
    auto res = grad_check(
        [&](Tape& t, const std::vector<NodeId>& in) { return probe_scalar(t, relu(t, in[0]), c); },
        {x});
    CHECK(res.max_rel_err < 1e-4);
    res = grad_check(
        [&](Tape& t, const std::vector<NodeId>& in) {
          return probe_scalar(t, sigmoid(t, in[0]), c);
        },
        {x});
    CHECK(res.max_rel_err < 1e-4);
  }
  {
    DenseTensor a = random_tensor({2, 3, 3, 3}, rng);
    DenseTensor b = random_tensor({3, 3, 3, 3}, rng);
    DenseTensor c = coeffs_for({5, 3, 3, 3}, rng);
    auto res = grad_check(
        [&](Tape& t, const std::vector<NodeId>& in) {
          return probe_scalar(t, concat_channels(t, {in[0], in[1]}), c);
        },
        {a, b});
    CHECK(res.max_rel_err < 1e-4);
  }
}
