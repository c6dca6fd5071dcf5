#include "voxnas/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <utility>

namespace voxnas {

std::size_t conv_out_extent(std::size_t e, int k, const ConvGeom& g) {
  const long num = static_cast<long>(e) + 2L * g.padding - g.dilation * (k - 1) - 1;
  if (num < 0) {
    throw std::invalid_argument("convolution window does not fit extent " + std::to_string(e));
  }
  return static_cast<std::size_t>(num / g.stride + 1);
}

namespace {

struct Vol {
  long X, Y, Z;
  long n() const { return X * Y * Z; }
};

Vol vol_of(const DenseTensor& t) {
  return Vol{static_cast<long>(t.shape[1]), static_cast<long>(t.shape[2]),
             static_cast<long>(t.shape[3])};
}

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void require_vol(const DenseTensor& t, const char* who) {
  if (t.rank() != 4) {
    throw std::invalid_argument(std::string(who) + ": expected a [C,X,Y,Z] tensor, got " +
                                shape_str(t.shape));
  }
}

struct Range {
  long lo, hi;  // inclusive; empty when lo > hi
};

// Output indices o with 0 <= o*s + koff < in_extent, clamped to [0, out_extent).
Range valid_range(long out_extent, long in_extent, long s, long koff) {
  long lo = 0;
  if (koff < 0) lo = (-koff + s - 1) / s;
  const long hi_num = in_extent - 1 - koff;
  long hi = hi_num < 0 ? -1 : hi_num / s;
  if (hi > out_extent - 1) hi = out_extent - 1;
  return {lo, hi};
}

// B[o] += sum_k wf[k] * A[o*s + k*d - p], one filter over one channel pair.
void accum_fwd(const double* A, Vol a, const double* wf, long k, const ConvGeom& g,
               double* B, Vol b) {
  const long s = g.stride, d = g.dilation, p = g.padding;
  for (long kx = 0; kx < k; ++kx) {
    const Range rx = valid_range(b.X, a.X, s, kx * d - p);
    for (long ky = 0; ky < k; ++ky) {
      const Range ry = valid_range(b.Y, a.Y, s, ky * d - p);
      for (long kz = 0; kz < k; ++kz) {
        const Range rz = valid_range(b.Z, a.Z, s, kz * d - p);
        const double wv = wf[(kx * k + ky) * k + kz];
        if (rz.lo > rz.hi) continue;
        const long n = rz.hi - rz.lo + 1;
        for (long ox = rx.lo; ox <= rx.hi; ++ox) {
          const long ix = ox * s + kx * d - p;
          for (long oy = ry.lo; oy <= ry.hi; ++oy) {
            const long iy = oy * s + ky * d - p;
            const double* ar = A + (ix * a.Y + iy) * a.Z + (rz.lo * s + kz * d - p);
            double* br = B + (ox * b.Y + oy) * b.Z + rz.lo;
            if (s == 1) {
              for (long i = 0; i < n; ++i) br[i] += wv * ar[i];
            } else {
              for (long i = 0; i < n; ++i) br[i] += wv * ar[i * s];
            }
          }
        }
      }
    }
  }
}

// dA[o*s + k*d - p] += wf[k] * dB[o]  (adjoint of accum_fwd).
void accum_bwd_data(double* dA, Vol a, const double* wf, long k, const ConvGeom& g,
                    const double* dB, Vol b) {
  const long s = g.stride, d = g.dilation, p = g.padding;
  for (long kx = 0; kx < k; ++kx) {
    const Range rx = valid_range(b.X, a.X, s, kx * d - p);
    for (long ky = 0; ky < k; ++ky) {
      const Range ry = valid_range(b.Y, a.Y, s, ky * d - p);
      for (long kz = 0; kz < k; ++kz) {
        const Range rz = valid_range(b.Z, a.Z, s, kz * d - p);
        const double wv = wf[(kx * k + ky) * k + kz];
        if (rz.lo > rz.hi || wv == 0.0) continue;
        const long n = rz.hi - rz.lo + 1;
        for (long ox = rx.lo; ox <= rx.hi; ++ox) {
          const long ix = ox * s + kx * d - p;
          for (long oy = ry.lo; oy <= ry.hi; ++oy) {
            const long iy = oy * s + ky * d - p;
            double* ar = dA + (ix * a.Y + iy) * a.Z + (rz.lo * s + kz * d - p);
            const double* br = dB + (ox * b.Y + oy) * b.Z + rz.lo;
            if (s == 1) {
              for (long i = 0; i < n; ++i) ar[i] += wv * br[i];
            } else {
              for (long i = 0; i < n; ++i) ar[i * s] += wv * br[i];
            }
          }
        }
      }
    }
  }
}

// dwf[k] += sum_o dB[o] * A[o*s + k*d - p].
void accum_bwd_weight(const double* A, Vol a, double* dwf, long k, const ConvGeom& g,
                      const double* dB, Vol b) {
  const long s = g.stride, d = g.dilation, p = g.padding;
  for (long kx = 0; kx < k; ++kx) {
    const Range rx = valid_range(b.X, a.X, s, kx * d - p);
    for (long ky = 0; ky < k; ++ky) {
      const Range ry = valid_range(b.Y, a.Y, s, ky * d - p);
      for (long kz = 0; kz < k; ++kz) {
        const Range rz = valid_range(b.Z, a.Z, s, kz * d - p);
        if (rz.lo > rz.hi) continue;
        const long n = rz.hi - rz.lo + 1;
        double acc = 0.0;
        for (long ox = rx.lo; ox <= rx.hi; ++ox) {
          const long ix = ox * s + kx * d - p;
          for (long oy = ry.lo; oy <= ry.hi; ++oy) {
            const long iy = oy * s + ky * d - p;
            const double* ar = A + (ix * a.Y + iy) * a.Z + (rz.lo * s + kz * d - p);
            const double* br = dB + (ox * b.Y + oy) * b.Z + rz.lo;
            if (s == 1) {
              for (long i = 0; i < n; ++i) acc += br[i] * ar[i];
            } else {
              for (long i = 0; i < n; ++i) acc += br[i] * ar[i * s];
            }
          }
        }
        dwf[(kx * k + ky) * k + kz] += acc;
      }
    }
  }
}

long filter_k(const DenseTensor& w, const char* who) {
  if (w.rank() != 5) {
    throw std::invalid_argument(std::string(who) + ": expected a rank-5 weight, got " +
                                shape_str(w.shape));
  }
  const long k = static_cast<long>(w.shape[2]);
  if (w.shape[3] != w.shape[2] || w.shape[4] != w.shape[2]) {
    throw std::invalid_argument(std::string(who) + ": filter must be cubic, got " +
                                shape_str(w.shape));
  }
  return k;
}

}  // namespace

NodeId conv3d(Tape& t, NodeId xid, NodeId wid, const ConvGeom& g) {
  const DenseTensor& x = t.val(xid);
  const DenseTensor& w = t.val(wid);
  require_vol(x, "conv3d");
  const long k = filter_k(w, "conv3d");
  const long Ci = static_cast<long>(x.shape[0]);
  const long Co = static_cast<long>(w.shape[0]);
  if (static_cast<long>(w.shape[1]) != Ci) {
    throw std::invalid_argument("conv3d: input has " + std::to_string(Ci) +
                                " channels but weight expects " + std::to_string(w.shape[1]));
  }
  const Vol a = vol_of(x);
  const Vol b{static_cast<long>(conv_out_extent(x.shape[1], k, g)),
              static_cast<long>(conv_out_extent(x.shape[2], k, g)),
              static_cast<long>(conv_out_extent(x.shape[3], k, g))};
  DenseTensor out({static_cast<std::size_t>(Co), static_cast<std::size_t>(b.X),
                   static_cast<std::size_t>(b.Y), static_cast<std::size_t>(b.Z)});
  for (long co = 0; co < Co; ++co) {
    for (long ci = 0; ci < Ci; ++ci) {
      accum_fwd(x.data.data() + ci * a.n(), a, w.data.data() + (co * Ci + ci) * k * k * k, k,
                g, out.data.data() + co * b.n(), b);
    }
  }
  return t.record(std::move(out), [xid, wid, g, k, Ci, Co, a, b](Tape& tp, NodeId self) {
    const DenseTensor& xv = tp.val(xid);
    const DenseTensor& wv = tp.val(wid);
    const DenseTensor& gy = tp.grad(self);
    DenseTensor& gx = tp.grad(xid);
    DenseTensor& gw = tp.grad(wid);
    for (long co = 0; co < Co; ++co) {
      const double* gyc = gy.data.data() + co * b.n();
      for (long ci = 0; ci < Ci; ++ci) {
        const long wo = (co * Ci + ci) * k * k * k;
        accum_bwd_data(gx.data.data() + ci * a.n(), a, wv.data.data() + wo, k, g, gyc, b);
        accum_bwd_weight(xv.data.data() + ci * a.n(), a, gw.data.data() + wo, k, g, gyc, b);
      }
    }
  });
}

NodeId conv3d_depthwise(Tape& t, NodeId xid, NodeId wid, const ConvGeom& g) {
  const DenseTensor& x = t.val(xid);
  const DenseTensor& w = t.val(wid);
  require_vol(x, "conv3d_depthwise");
  const long k = filter_k(w, "conv3d_depthwise");
  const long C = static_cast<long>(x.shape[0]);
  if (static_cast<long>(w.shape[0]) != C || w.shape[1] != 1) {
    throw std::invalid_argument("conv3d_depthwise: weight must be [C,1,k,k,k] with C = " +
                                std::to_string(C) + ", got " + shape_str(w.shape));
  }
  const Vol a = vol_of(x);
  const Vol b{static_cast<long>(conv_out_extent(x.shape[1], k, g)),
              static_cast<long>(conv_out_extent(x.shape[2], k, g)),
              static_cast<long>(conv_out_extent(x.shape[3], k, g))};
  DenseTensor out({static_cast<std::size_t>(C), static_cast<std::size_t>(b.X),
                   static_cast<std::size_t>(b.Y), static_cast<std::size_t>(b.Z)});
  for (long c = 0; c < C; ++c) {
    accum_fwd(x.data.data() + c * a.n(), a, w.data.data() + c * k * k * k, k, g,
              out.data.data() + c * b.n(), b);
  }
  return t.record(std::move(out), [xid, wid, g, k, C, a, b](Tape& tp, NodeId self) {
    const DenseTensor& xv = tp.val(xid);
    const DenseTensor& wv = tp.val(wid);
    const DenseTensor& gy = tp.grad(self);
    DenseTensor& gx = tp.grad(xid);
    DenseTensor& gw = tp.grad(wid);
    for (long c = 0; c < C; ++c) {
      const double* gyc = gy.data.data() + c * b.n();
      accum_bwd_data(gx.data.data() + c * a.n(), a, wv.data.data() + c * k * k * k, k, g, gyc, b);
      accum_bwd_weight(xv.data.data() + c * a.n(), a, gw.data.data() + c * k * k * k, k, g, gyc, b);
    }
  });
}

namespace {

// Shared scatter-style transposed convolution. Weight layout [Ci, Co, k^3]
// with depthwise collapsing Co to 1 filter reused per channel.
Vol transposed_out_vol(const DenseTensor& x, long k, const ConvGeom& g, int output_padding) {
  auto ext = [&](std::size_t e) {
    const long o = (static_cast<long>(e) - 1) * g.stride - 2L * g.padding +
                   g.dilation * (k - 1) + 1 + output_padding;
    if (o != 2 * static_cast<long>(e)) {
      throw std::invalid_argument(
          "transposed convolution parameters must double the extents exactly");
    }
    return o;
  };
  return Vol{ext(x.shape[1]), ext(x.shape[2]), ext(x.shape[3])};
}

}  // namespace

NodeId conv3d_transposed(Tape& t, NodeId xid, NodeId wid, const ConvGeom& g,
                         int output_padding) {
  const DenseTensor& x = t.val(xid);
  const DenseTensor& w = t.val(wid);
  require_vol(x, "conv3d_transposed");
  const long k = filter_k(w, "conv3d_transposed");
  const long Ci = static_cast<long>(x.shape[0]);
  const long Co = static_cast<long>(w.shape[1]);
  if (static_cast<long>(w.shape[0]) != Ci) {
    throw std::invalid_argument("conv3d_transposed: input has " + std::to_string(Ci) +
                                " channels but weight expects " + std::to_string(w.shape[0]));
  }
  const Vol a = vol_of(x);  // "small" side
  const Vol b = transposed_out_vol(x, k, g, output_padding);
  DenseTensor out({static_cast<std::size_t>(Co), static_cast<std::size_t>(b.X),
                   static_cast<std::size_t>(b.Y), static_cast<std::size_t>(b.Z)});
  for (long ci = 0; ci < Ci; ++ci) {
    for (long co = 0; co < Co; ++co) {
      // scatter: out[o] += w * x[i], o = i*s + k*d - p
      accum_bwd_data(out.data.data() + co * b.n(), b,
                     w.data.data() + (ci * Co + co) * k * k * k, k, g,
                     x.data.data() + ci * a.n(), a);
    }
  }
  return t.record(std::move(out), [xid, wid, g, k, Ci, Co, a, b](Tape& tp, NodeId self) {
    const DenseTensor& xv = tp.val(xid);
    const DenseTensor& wv = tp.val(wid);
    const DenseTensor& gy = tp.grad(self);
    DenseTensor& gx = tp.grad(xid);
    DenseTensor& gw = tp.grad(wid);
    for (long ci = 0; ci < Ci; ++ci) {
      for (long co = 0; co < Co; ++co) {
        const long wo = (ci * Co + co) * k * k * k;
        // gather: gx[i] += w * gy[i*s + k*d - p]
        accum_fwd(gy.data.data() + co * b.n(), b, wv.data.data() + wo, k, g,
                  gx.data.data() + ci * a.n(), a);
        accum_bwd_weight(gy.data.data() + co * b.n(), b, gw.data.data() + wo, k, g,
                         xv.data.data() + ci * a.n(), a);
      }
    }
  });
}

NodeId conv3d_transposed_depthwise(Tape& t, NodeId xid, NodeId wid, const ConvGeom& g,
                                   int output_padding) {
  const DenseTensor& x = t.val(xid);
  const DenseTensor& w = t.val(wid);
  require_vol(x, "conv3d_transposed_depthwise");
  const long k = filter_k(w, "conv3d_transposed_depthwise");
  const long C = static_cast<long>(x.shape[0]);
  if (static_cast<long>(w.shape[0]) != C || w.shape[1] != 1) {
    throw std::invalid_argument("conv3d_transposed_depthwise: weight must be [C,1,k,k,k]");
  }
  const Vol a = vol_of(x);
  const Vol b = transposed_out_vol(x, k, g, output_padding);
  DenseTensor out({static_cast<std::size_t>(C), static_cast<std::size_t>(b.X),
                   static_cast<std::size_t>(b.Y), static_cast<std::size_t>(b.Z)});
  for (long c = 0; c < C; ++c) {
    accum_bwd_data(out.data.data() + c * b.n(), b, w.data.data() + c * k * k * k, k, g,
                   x.data.data() + c * a.n(), a);
  }
  return t.record(std::move(out), [xid, wid, g, k, C, a, b](Tape& tp, NodeId self) {
    const DenseTensor& xv = tp.val(xid);
    const DenseTensor& wv = tp.val(wid);
    const DenseTensor& gy = tp.grad(self);
    DenseTensor& gx = tp.grad(xid);
    DenseTensor& gw = tp.grad(wid);
    for (long c = 0; c < C; ++c) {
      const long wo = c * k * k * k;
      accum_fwd(gy.data.data() + c * b.n(), b, wv.data.data() + wo, k, g,
                gx.data.data() + c * a.n(), a);
      accum_bwd_weight(gy.data.data() + c * b.n(), b, gw.data.data() + wo, k, g,
                       xv.data.data() + c * a.n(), a);
    }
  });
}

NodeId pool3d(Tape& t, NodeId xid, PoolMode mode, int kernel, int stride, int padding) {
  const DenseTensor& x = t.val(xid);
  require_vol(x, "pool3d");
  const ConvGeom g{stride, 1, padding};
  const long C = static_cast<long>(x.shape[0]);
  const Vol a = vol_of(x);
  const Vol b{static_cast<long>(conv_out_extent(x.shape[1], kernel, g)),
              static_cast<long>(conv_out_extent(x.shape[2], kernel, g)),
              static_cast<long>(conv_out_extent(x.shape[3], kernel, g))};
  DenseTensor out({static_cast<std::size_t>(C), static_cast<std::size_t>(b.X),
                   static_cast<std::size_t>(b.Y), static_cast<std::size_t>(b.Z)});
  const long k = kernel, s = stride, p = padding;
  auto window = [&](long o, long extent) {
    const long w0 = o * s - p;
    return std::pair<long, long>{std::max(0L, w0), std::min(extent - 1, w0 + k - 1)};
  };

  if (mode == PoolMode::kMax) {
    std::vector<long> argmax(out.numel());
    long oi = 0;
    for (long c = 0; c < C; ++c) {
      const double* xc = x.data.data() + c * a.n();
      for (long ox = 0; ox < b.X; ++ox) {
        const auto [x0, x1] = window(ox, a.X);
        for (long oy = 0; oy < b.Y; ++oy) {
          const auto [y0, y1] = window(oy, a.Y);
          for (long oz = 0; oz < b.Z; ++oz) {
            const auto [z0, z1] = window(oz, a.Z);
            double best = -std::numeric_limits<double>::infinity();
            long best_i = -1;
            for (long ix = x0; ix <= x1; ++ix) {
              for (long iy = y0; iy <= y1; ++iy) {
                const double* row = xc + (ix * a.Y + iy) * a.Z;
                for (long iz = z0; iz <= z1; ++iz) {
                  if (row[iz] > best) {  // strict: first index wins ties
                    best = row[iz];
                    best_i = c * a.n() + (ix * a.Y + iy) * a.Z + iz;
                  }
                }
              }
            }
            out.data[oi] = best;
            argmax[oi++] = best_i;
          }
        }
      }
    }
    return t.record(std::move(out), [xid, argmax = std::move(argmax)](Tape& tp, NodeId self) {
      const DenseTensor& gy = tp.grad(self);
      DenseTensor& gx = tp.grad(xid);
      for (std::size_t i = 0; i < argmax.size(); ++i) gx.data[argmax[i]] += gy.data[i];
    });
  }

  // average over the in-bounds part of each window
  long oi = 0;
  for (long c = 0; c < C; ++c) {
    const double* xc = x.data.data() + c * a.n();
    for (long ox = 0; ox < b.X; ++ox) {
      const auto [x0, x1] = window(ox, a.X);
      for (long oy = 0; oy < b.Y; ++oy) {
        const auto [y0, y1] = window(oy, a.Y);
        for (long oz = 0; oz < b.Z; ++oz) {
          const auto [z0, z1] = window(oz, a.Z);
          double sum = 0.0;
          for (long ix = x0; ix <= x1; ++ix) {
            for (long iy = y0; iy <= y1; ++iy) {
              const double* row = xc + (ix * a.Y + iy) * a.Z;
              for (long iz = z0; iz <= z1; ++iz) sum += row[iz];
            }
          }
          const long cnt = (x1 - x0 + 1) * (y1 - y0 + 1) * (z1 - z0 + 1);
          out.data[oi++] = sum / static_cast<double>(cnt);
        }
      }
    }
  }
  return t.record(std::move(out), [xid, a, b, C, k, s, p](Tape& tp, NodeId self) {
    const DenseTensor& gy = tp.grad(self);
    DenseTensor& gx = tp.grad(xid);
    auto window = [&](long o, long extent) {
      const long w0 = o * s - p;
      return std::pair<long, long>{std::max(0L, w0), std::min(extent - 1, w0 + k - 1)};
    };
    long oi = 0;
    for (long c = 0; c < C; ++c) {
      double* gxc = gx.data.data() + c * a.n();
      for (long ox = 0; ox < b.X; ++ox) {
        const auto [x0, x1] = window(ox, a.X);
        for (long oy = 0; oy < b.Y; ++oy) {
          const auto [y0, y1] = window(oy, a.Y);
          for (long oz = 0; oz < b.Z; ++oz) {
            const auto [z0, z1] = window(oz, a.Z);
            const long cnt = (x1 - x0 + 1) * (y1 - y0 + 1) * (z1 - z0 + 1);
            const double gv = gy.data[oi++] / static_cast<double>(cnt);
            for (long ix = x0; ix <= x1; ++ix) {
              for (long iy = y0; iy <= y1; ++iy) {
                double* row = gxc + (ix * a.Y + iy) * a.Z;
                for (long iz = z0; iz <= z1; ++iz) row[iz] += gv;
              }
            }
          }
        }
      }
    }
  });
}

NodeId group_norm(Tape& t, NodeId xid, NodeId gid, NodeId bid, std::size_t groups,
                  double eps) {
  const DenseTensor& x = t.val(xid);
  require_vol(x, "group_norm");
  const std::size_t C = x.shape[0];
  if (groups == 0 || C % groups != 0) {
    throw std::invalid_argument("group_norm: groups (" + std::to_string(groups) +
                                ") must divide channels (" + std::to_string(C) + ")");
  }
  const DenseTensor& gamma = t.val(gid);
  const DenseTensor& beta = t.val(bid);
  require(gamma.numel() == C && beta.numel() == C, "group_norm: gamma/beta must have C entries");
  const std::size_t S = x.numel() / C;
  const std::size_t cpg = C / groups;
  const std::size_t gsz = cpg * S;

  std::vector<double> mu(groups), rstd(groups);
  DenseTensor out(x.shape);
  for (std::size_t g = 0; g < groups; ++g) {
    const double* xg = x.data.data() + g * gsz;
    double m = 0.0;
    for (std::size_t i = 0; i < gsz; ++i) m += xg[i];
    m /= static_cast<double>(gsz);
    double v = 0.0;
    for (std::size_t i = 0; i < gsz; ++i) {
      const double d = xg[i] - m;
      v += d * d;
    }
    v /= static_cast<double>(gsz);
    mu[g] = m;
    rstd[g] = 1.0 / std::sqrt(v + eps);
    for (std::size_t c = g * cpg; c < (g + 1) * cpg; ++c) {
      const double sc = rstd[g] * gamma.data[c];
      const double sh = beta.data[c] - mu[g] * sc;
      const double* xr = x.data.data() + c * S;
      double* yr = out.data.data() + c * S;
      for (std::size_t i = 0; i < S; ++i) yr[i] = sc * xr[i] + sh;
    }
  }
  return t.record(std::move(out),
                  [xid, gid, bid, groups, C, S, cpg, gsz, mu = std::move(mu),
                   rstd = std::move(rstd)](Tape& tp, NodeId self) {
    const DenseTensor& xv = tp.val(xid);
    const DenseTensor& gamma = tp.val(gid);
    const DenseTensor& gy = tp.grad(self);
    DenseTensor& gx = tp.grad(xid);
    DenseTensor& gg = tp.grad(gid);
    DenseTensor& gb = tp.grad(bid);
    for (std::size_t g = 0; g < groups; ++g) {
      // xhat = (x - mu) * rstd; dxhat = gy * gamma
      double sum_dxh = 0.0, sum_dxh_xh = 0.0;
      for (std::size_t c = g * cpg; c < (g + 1) * cpg; ++c) {
        const double* xr = xv.data.data() + c * S;
        const double* gyr = gy.data.data() + c * S;
        double dgamma = 0.0, dbeta = 0.0;
        for (std::size_t i = 0; i < S; ++i) {
          const double xh = (xr[i] - mu[g]) * rstd[g];
          const double dxh = gyr[i] * gamma.data[c];
          dgamma += gyr[i] * xh;
          dbeta += gyr[i];
          sum_dxh += dxh;
          sum_dxh_xh += dxh * xh;
        }
        gg.data[c] += dgamma;
        gb.data[c] += dbeta;
      }
      const double inv_n = 1.0 / static_cast<double>(gsz);
      const double mean_dxh = sum_dxh * inv_n;
      const double mean_dxh_xh = sum_dxh_xh * inv_n;
      for (std::size_t c = g * cpg; c < (g + 1) * cpg; ++c) {
        const double* xr = xv.data.data() + c * S;
        const double* gyr = gy.data.data() + c * S;
        double* gxr = gx.data.data() + c * S;
        for (std::size_t i = 0; i < S; ++i) {
          const double xh = (xr[i] - mu[g]) * rstd[g];
          const double dxh = gyr[i] * gamma.data[c];
          gxr[i] += rstd[g] * (dxh - mean_dxh - xh * mean_dxh_xh);
        }
      }
    }
  });
}

NodeId relu(Tape& t, NodeId xid) {
  const DenseTensor& x = t.val(xid);
  DenseTensor out(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i) out.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
  return t.record(std::move(out), [xid](Tape& tp, NodeId self) {
    const DenseTensor& xv = tp.val(xid);
    const DenseTensor& gy = tp.grad(self);
    DenseTensor& gx = tp.grad(xid);
    for (std::size_t i = 0; i < xv.numel(); ++i) {
      if (xv.data[i] > 0.0) gx.data[i] += gy.data[i];
    }
  });
}

NodeId sigmoid(Tape& t, NodeId xid) {
  const DenseTensor& x = t.val(xid);
  DenseTensor out(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i) out.data[i] = 1.0 / (1.0 + std::exp(-x.data[i]));
  return t.record(std::move(out), [xid](Tape& tp, NodeId self) {
    const DenseTensor& y = tp.val(self);
    const DenseTensor& gy = tp.grad(self);
    DenseTensor& gx = tp.grad(xid);
    for (std::size_t i = 0; i < y.numel(); ++i) {
      gx.data[i] += gy.data[i] * y.data[i] * (1.0 - y.data[i]);
    }
  });
}

NodeId add(Tape& t, NodeId aid, NodeId bid) {
  const DenseTensor& a = t.val(aid);
  const DenseTensor& b = t.val(bid);
  if (!a.same_shape(b)) {
    throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape) + " vs " +
                                shape_str(b.shape));
  }
  DenseTensor out(a.shape);
  for (std::size_t i = 0; i < a.numel(); ++i) out.data[i] = a.data[i] + b.data[i];
  return t.record(std::move(out), [aid, bid](Tape& tp, NodeId self) {
    const DenseTensor& gy = tp.grad(self);
    DenseTensor& ga = tp.grad(aid);
    DenseTensor& gb = tp.grad(bid);
    for (std::size_t i = 0; i < gy.numel(); ++i) {
      ga.data[i] += gy.data[i];
      gb.data[i] += gy.data[i];
    }
  });
}

NodeId scale(Tape& t, NodeId xid, double c) {
  const DenseTensor& x = t.val(xid);
  DenseTensor out(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i) out.data[i] = c * x.data[i];
  return t.record(std::move(out), [xid, c](Tape& tp, NodeId self) {
    const DenseTensor& gy = tp.grad(self);
    DenseTensor& gx = tp.grad(xid);
    for (std::size_t i = 0; i < gy.numel(); ++i) gx.data[i] += c * gy.data[i];
  });
}

NodeId concat_channels(Tape& t, const std::vector<NodeId>& xs) {
  require(!xs.empty(), "concat_channels: need at least one input");
  const DenseTensor& first = t.val(xs[0]);
  require_vol(first, "concat_channels");
  std::size_t C = 0;
  for (NodeId id : xs) {
    const DenseTensor& x = t.val(id);
    require_vol(x, "concat_channels");
    if (x.shape[1] != first.shape[1] || x.shape[2] != first.shape[2] ||
        x.shape[3] != first.shape[3]) {
      throw std::invalid_argument("concat_channels: spatial shapes differ");
    }
    C += x.shape[0];
  }
  DenseTensor out({C, first.shape[1], first.shape[2], first.shape[3]});
  std::size_t off = 0;
  for (NodeId id : xs) {
    const DenseTensor& x = t.val(id);
    std::memcpy(out.data.data() + off, x.data.data(), x.numel() * sizeof(double));
    off += x.numel();
  }
  return t.record(std::move(out), [xs](Tape& tp, NodeId self) {
    const DenseTensor& gy = tp.grad(self);
    std::size_t off = 0;
    for (NodeId id : xs) {
      DenseTensor& gx = tp.grad(id);
      for (std::size_t i = 0; i < gx.numel(); ++i) gx.data[i] += gy.data[off + i];
      off += gx.numel();
    }
  });
}

NodeId softmax(Tape& t, NodeId vid) {
  const DenseTensor& v = t.val(vid);
  require(v.rank() == 1, "softmax: expected a rank-1 tensor");
  const double mx = *std::max_element(v.data.begin(), v.data.end());
  DenseTensor out(v.shape);
  double sum = 0.0;
  for (std::size_t i = 0; i < v.numel(); ++i) {
    out.data[i] = std::exp(v.data[i] - mx);
    sum += out.data[i];
  }
  for (double& y : out.data) y /= sum;
  return t.record(std::move(out), [vid](Tape& tp, NodeId self) {
    const DenseTensor& y = tp.val(self);
    const DenseTensor& gy = tp.grad(self);
    DenseTensor& gv = tp.grad(vid);
    double dot = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) dot += gy.data[i] * y.data[i];
    for (std::size_t i = 0; i < y.numel(); ++i) {
      gv.data[i] += y.data[i] * (gy.data[i] - dot);
    }
  });
}

std::vector<double> softmax_values(const std::vector<double>& v) {
  const double mx = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    sum += out[i];
  }
  for (double& y : out) y /= sum;
  return out;
}

NodeId weighted_sum(Tape& t, const std::vector<NodeId>& xs, NodeId wid) {
  require(!xs.empty(), "weighted_sum: need at least one input");
  const DenseTensor& w = t.val(wid);
  require(w.rank() == 1 && w.numel() == xs.size(),
          "weighted_sum: weight length must match input count");
  const DenseTensor& first = t.val(xs[0]);
  DenseTensor out(first.shape);
  for (std::size_t j = 0; j < xs.size(); ++j) {
    const DenseTensor& x = t.val(xs[j]);
    if (!x.same_shape(first)) {
      throw std::invalid_argument("weighted_sum: candidate output shapes differ: " +
                                  shape_str(first.shape) + " vs " + shape_str(x.shape));
    }
    const double wv = w.data[j];
    for (std::size_t i = 0; i < x.numel(); ++i) out.data[i] += wv * x.data[i];
  }
  return t.record(std::move(out), [xs, wid](Tape& tp, NodeId self) {
    const DenseTensor& gy = tp.grad(self);
    const DenseTensor& w = tp.val(wid);
    DenseTensor& gw = tp.grad(wid);
    for (std::size_t j = 0; j < xs.size(); ++j) {
      const DenseTensor& x = tp.val(xs[j]);
      DenseTensor& gx = tp.grad(xs[j]);
      const double wv = w.data[j];
      double acc = 0.0;
      for (std::size_t i = 0; i < x.numel(); ++i) {
        gx.data[i] += wv * gy.data[i];
        acc += gy.data[i] * x.data[i];
      }
      gw.data[j] += acc;
    }
  });
}

NodeId global_avg_pool(Tape& t, NodeId xid) {
  const DenseTensor& x = t.val(xid);
  require_vol(x, "global_avg_pool");
  const std::size_t C = x.shape[0];
  const std::size_t S = x.numel() / C;
  DenseTensor out({C});
  for (std::size_t c = 0; c < C; ++c) {
    double sum = 0.0;
    const double* xr = x.data.data() + c * S;
    for (std::size_t i = 0; i < S; ++i) sum += xr[i];
    out.data[c] = sum / static_cast<double>(S);
  }
  return t.record(std::move(out), [xid, C, S](Tape& tp, NodeId self) {
    const DenseTensor& gy = tp.grad(self);
    DenseTensor& gx = tp.grad(xid);
    for (std::size_t c = 0; c < C; ++c) {
      const double gv = gy.data[c] / static_cast<double>(S);
      double* gr = gx.data.data() + c * S;
      for (std::size_t i = 0; i < S; ++i) gr[i] += gv;
    }
  });
}

NodeId scale_channels(Tape& t, NodeId xid, NodeId gid) {
  const DenseTensor& x = t.val(xid);
  const DenseTensor& g = t.val(gid);
  require_vol(x, "scale_channels");
  require(g.rank() == 1 && g.numel() == x.shape[0],
          "scale_channels: gate length must equal channel count");
  const std::size_t C = x.shape[0];
  const std::size_t S = x.numel() / C;
  DenseTensor out(x.shape);
  for (std::size_t c = 0; c < C; ++c) {
    const double gv = g.data[c];
    const double* xr = x.data.data() + c * S;
    double* yr = out.data.data() + c * S;
    for (std::size_t i = 0; i < S; ++i) yr[i] = gv * xr[i];
  }
  return t.record(std::move(out), [xid, gid, C, S](Tape& tp, NodeId self) {
    const DenseTensor& xv = tp.val(xid);
    const DenseTensor& g = tp.val(gid);
    const DenseTensor& gy = tp.grad(self);
    DenseTensor& gx = tp.grad(xid);
    DenseTensor& gg = tp.grad(gid);
    for (std::size_t c = 0; c < C; ++c) {
      const double gv = g.data[c];
      double acc = 0.0;
      for (std::size_t i = 0; i < S; ++i) {
        const std::size_t j = c * S + i;
        gx.data[j] += gv * gy.data[j];
        acc += gy.data[j] * xv.data[j];
      }
      gg.data[c] += acc;
    }
  });
}

NodeId add_channel_bias(Tape& t, NodeId xid, NodeId bid) {
  const DenseTensor& x = t.val(xid);
  const DenseTensor& b = t.val(bid);
  require_vol(x, "add_channel_bias");
  require(b.rank() == 1 && b.numel() == x.shape[0],
          "add_channel_bias: bias length must equal channel count");
  const std::size_t C = x.shape[0];
  const std::size_t S = x.numel() / C;
  DenseTensor out(x.shape);
  for (std::size_t c = 0; c < C; ++c) {
    const double bv = b.data[c];
    const double* xr = x.data.data() + c * S;
    double* yr = out.data.data() + c * S;
    for (std::size_t i = 0; i < S; ++i) yr[i] = xr[i] + bv;
  }
  return t.record(std::move(out), [xid, bid, C, S](Tape& tp, NodeId self) {
    const DenseTensor& gy = tp.grad(self);
    DenseTensor& gx = tp.grad(xid);
    DenseTensor& gb = tp.grad(bid);
    for (std::size_t c = 0; c < C; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < S; ++i) {
        const std::size_t j = c * S + i;
        gx.data[j] += gy.data[j];
        acc += gy.data[j];
      }
      gb.data[c] += acc;
    }
  });
}

NodeId dense(Tape& t, NodeId vid, NodeId wid, NodeId bid) {
  const DenseTensor& v = t.val(vid);
  const DenseTensor& w = t.val(wid);
  const DenseTensor& b = t.val(bid);
  require(v.rank() == 1, "dense: input must be rank-1");
  require(w.rank() == 2 && w.shape[1] == v.numel(), "dense: weight shape mismatch");
  require(b.rank() == 1 && b.numel() == w.shape[0], "dense: bias shape mismatch");
  const std::size_t O = w.shape[0], I = v.numel();
  DenseTensor out({O});
  for (std::size_t o = 0; o < O; ++o) {
    double acc = b.data[o];
    const double* wr = w.data.data() + o * I;
    for (std::size_t i = 0; i < I; ++i) acc += wr[i] * v.data[i];
    out.data[o] = acc;
  }
  return t.record(std::move(out), [vid, wid, bid, O, I](Tape& tp, NodeId self) {
    const DenseTensor& vv = tp.val(vid);
    const DenseTensor& w = tp.val(wid);
    const DenseTensor& gy = tp.grad(self);
    DenseTensor& gv = tp.grad(vid);
    DenseTensor& gw = tp.grad(wid);
    DenseTensor& gb = tp.grad(bid);
    for (std::size_t o = 0; o < O; ++o) {
      const double g = gy.data[o];
      gb.data[o] += g;
      const double* wr = w.data.data() + o * I;
      double* gwr = gw.data.data() + o * I;
      for (std::size_t i = 0; i < I; ++i) {
        gv.data[i] += g * wr[i];
        gwr[i] += g * vv.data[i];
      }
    }
  });
}

NodeId se_gate_apply(Tape& t, NodeId y, NodeId w1, NodeId b1, NodeId w2, NodeId b2) {
  const NodeId squeezed = global_avg_pool(t, y);
  const NodeId hidden = relu(t, dense(t, squeezed, w1, b1));
  const NodeId gates = sigmoid(t, dense(t, hidden, w2, b2));
  return scale_channels(t, y, gates);
}

NodeId sum_all(Tape& t, NodeId xid) {
  const DenseTensor& x = t.val(xid);
  double s = 0.0;
  for (double v : x.data) s += v;
  return t.record(DenseTensor::scalar(s), [xid](Tape& tp, NodeId self) {
    const double g = tp.grad(self)[0];
    DenseTensor& gx = tp.grad(xid);
    for (double& v : gx.data) v += g;
  });
}

}  // namespace voxnas
