#ifndef VOXNAS_OPS_HPP
#define VOXNAS_OPS_HPP

#include <vector>

#include "voxnas/tape.hpp"

namespace voxnas {

/// Geometry of a convolution-style sweep. Padding is the caller's business;
/// the helpers below pick values that halve, preserve, or double extents.
struct ConvGeom {
  int stride = 1;
  int dilation = 1;
  int padding = 1;
};

// --- convolution family -----------------------------------------------------
// Volumetric tensors are [C, X, Y, Z]; weights [C_out, C_in, k, k, k].

NodeId conv3d(Tape& t, NodeId x, NodeId w, const ConvGeom& g);

/// One k^3 filter per channel; weight [C, 1, k, k, k].
NodeId conv3d_depthwise(Tape& t, NodeId x, NodeId w, const ConvGeom& g);

/// Transposed (fractionally strided) convolution fixed to exact spatial
/// doubling; weight [C_in, C_out, k, k, k]. Parameter combinations that do
/// not double the extents are rejected.
NodeId conv3d_transposed(Tape& t, NodeId x, NodeId w, const ConvGeom& g,
                         int output_padding = 1);

/// Depthwise transposed stage (doubling); weight [C, 1, k, k, k].
NodeId conv3d_transposed_depthwise(Tape& t, NodeId x, NodeId w, const ConvGeom& g,
                                   int output_padding = 1);

enum class PoolMode { kMax, kAvg };

/// Max/avg pooling; default geometry halves each extent. Max routes gradient
/// to the first-index argmax; avg divides by the in-bounds window size.
NodeId pool3d(Tape& t, NodeId x, PoolMode mode, int kernel = 3, int stride = 2,
              int padding = 1);

/// Per-group standardization followed by per-channel affine. gamma/beta: [C].
NodeId group_norm(Tape& t, NodeId x, NodeId gamma, NodeId beta, std::size_t groups,
                  double eps = 1e-5);

// --- elementwise and structural --------------------------------------------

NodeId relu(Tape& t, NodeId x);
NodeId sigmoid(Tape& t, NodeId x);
NodeId add(Tape& t, NodeId a, NodeId b);
NodeId scale(Tape& t, NodeId x, double c);

/// Concatenate along the channel (first) axis; spatial shapes must agree.
NodeId concat_channels(Tape& t, const std::vector<NodeId>& xs);

/// Numerically stable softmax over a rank-1 tensor.
NodeId softmax(Tape& t, NodeId v);

/// sum_i w[i] * xs[i] with identically shaped xs and w: [n].
NodeId weighted_sum(Tape& t, const std::vector<NodeId>& xs, NodeId w);

/// [C, X, Y, Z] -> [C] spatial mean per channel.
NodeId global_avg_pool(Tape& t, NodeId x);

/// Multiply channel c of x by g[c].
NodeId scale_channels(Tape& t, NodeId x, NodeId g);

/// Add b[c] to every voxel of channel c.
NodeId add_channel_bias(Tape& t, NodeId x, NodeId b);

/// w: [O, I], b: [O], v: [I] -> [O].
NodeId dense(Tape& t, NodeId v, NodeId w, NodeId b);

NodeId sum_all(Tape& t, NodeId x);

/// Squeeze-and-excitation gating of y: squeeze by global average pool, excite
/// through dense(w1,b1) -> relu -> dense(w2,b2) -> sigmoid, then scale y's
/// channels by the gates. w1: [C/r, C], w2: [C, C/r].
NodeId se_gate_apply(Tape& t, NodeId y, NodeId w1, NodeId b1, NodeId w2, NodeId b2);

/// Non-tape softmax used by genotype derivation.
std::vector<double> softmax_values(const std::vector<double>& v);

/// Output extent of a strided/dilated sweep over extent e.
std::size_t conv_out_extent(std::size_t e, int k, const ConvGeom& g);

}  // namespace voxnas

#endif  // VOXNAS_OPS_HPP
