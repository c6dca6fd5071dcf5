#include "voxnas/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "voxnas/errors.hpp"

namespace voxnas {

namespace {

std::size_t spatial_numel(const Extents& dims) {
  if (dims.size() != 3) throw std::invalid_argument("metrics: dims must be [X, Y, Z]");
  return dims[0] * dims[1] * dims[2];
}

void check_mask_sizes(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  if (a.size() != b.size() || a.empty()) {
    throw std::invalid_argument("metrics: masks must be nonempty and equally sized");
  }
}

std::size_t count_on(const std::vector<std::uint8_t>& m) {
  std::size_t n = 0;
  for (std::uint8_t v : m) n += v != 0;
  return n;
}

std::size_t count_both(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += a[i] != 0 && b[i] != 0;
  return n;
}

constexpr double kInf = 1e30;

// d[q] = min_v (q-v)^2 + f[v]; exact on integer-valued f.
void dt1d(std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
          std::vector<double>& z, std::size_t n) {
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = 1; q < static_cast<int>(n); ++q) {
    double s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) / (2.0 * (q - v[k]));
    while (s <= z[k]) {
      --k;
      s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) / (2.0 * (q - v[k]));
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (int q = 0; q < static_cast<int>(n); ++q) {
    while (z[k + 1] < q) ++k;
    d[q] = double(q - v[k]) * (q - v[k]) + f[v[k]];
  }
}

// Exact squared Euclidean distance to the nearest seed voxel.
std::vector<double> squared_edt(const std::vector<std::uint8_t>& seeds, const Extents& dims) {
  const std::size_t X = dims[0], Y = dims[1], Z = dims[2];
  std::vector<double> g(X * Y * Z);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = seeds[i] ? 0.0 : kInf;

  const std::size_t max_n = std::max({X, Y, Z});
  std::vector<double> f(max_n), d(max_n), z(max_n + 1);
  std::vector<int> v(max_n);

  for (std::size_t x = 0; x < X; ++x) {
    for (std::size_t y = 0; y < Y; ++y) {
      double* col = &g[(x * Y + y) * Z];
      std::copy(col, col + Z, f.begin());
      dt1d(f, d, v, z, Z);
      std::copy(d.begin(), d.begin() + Z, col);
    }
  }
  for (std::size_t x = 0; x < X; ++x) {
    for (std::size_t zc = 0; zc < Z; ++zc) {
      for (std::size_t y = 0; y < Y; ++y) f[y] = g[(x * Y + y) * Z + zc];
      dt1d(f, d, v, z, Y);
      for (std::size_t y = 0; y < Y; ++y) g[(x * Y + y) * Z + zc] = d[y];
    }
  }
  for (std::size_t y = 0; y < Y; ++y) {
    for (std::size_t zc = 0; zc < Z; ++zc) {
      for (std::size_t x = 0; x < X; ++x) f[x] = g[(x * Y + y) * Z + zc];
      dt1d(f, d, v, z, X);
      for (std::size_t x = 0; x < X; ++x) g[(x * Y + y) * Z + zc] = d[x];
    }
  }
  return g;
}

// Nearest-rank 95th percentile of the square roots of squared distances.
double percentile95(std::vector<double>& sq) {
  std::sort(sq.begin(), sq.end());
  const std::size_t rank =
      static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(sq.size())));
  return std::sqrt(sq[rank - 1]);
}

}  // namespace

SubregionMasks label_to_subregions(const std::vector<std::uint8_t>& label, const Extents& dims) {
  if (label.size() != spatial_numel(dims)) {
    throw std::invalid_argument("label_to_subregions: label size does not match dims");
  }
  SubregionMasks m;
  m.dims = dims;
  m.et.resize(label.size());
  m.tc.resize(label.size());
  m.wt.resize(label.size());
  for (std::size_t i = 0; i < label.size(); ++i) {
    const std::uint8_t l = label[i];
    if (l != 0 && l != 1 && l != 2 && l != 4) {
      throw DataError("label_to_subregions: illegal label value " + std::to_string(l));
    }
    m.et[i] = l == 4;
    m.tc[i] = l == 1 || l == 4;
    m.wt[i] = l != 0;
  }
  return m;
}

DenseTensor masks_to_tensor(const SubregionMasks& m) {
  const std::size_t n = spatial_numel(m.dims);
  DenseTensor out({3, m.dims[0], m.dims[1], m.dims[2]});
  for (std::size_t i = 0; i < n; ++i) {
    out.data[i] = m.et[i];
    out.data[n + i] = m.tc[i];
    out.data[2 * n + i] = m.wt[i];
  }
  return out;
}

std::vector<std::uint8_t> prediction_to_label(const DenseTensor& confidence, double threshold) {
  if (confidence.rank() != 4 || confidence.shape[0] != 3) {
    throw std::invalid_argument("prediction_to_label: expected [3, X, Y, Z]");
  }
  const std::size_t n = confidence.numel() / 3;
  std::vector<std::uint8_t> label(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool et = confidence.data[i] > threshold;
    const bool tc = confidence.data[n + i] > threshold;
    const bool wt = confidence.data[2 * n + i] > threshold;
    label[i] = et ? 4 : tc ? 1 : wt ? 2 : 0;
  }
  return label;
}

SubregionMasks subregions_from_confidence(const DenseTensor& confidence, double threshold,
                                          bool force_nested) {
  if (confidence.rank() != 4 || confidence.shape[0] != 3) {
    throw std::invalid_argument("subregions_from_confidence: expected [3, X, Y, Z]");
  }
  const std::size_t n = confidence.numel() / 3;
  SubregionMasks m;
  m.dims = {confidence.shape[1], confidence.shape[2], confidence.shape[3]};
  m.et.resize(n);
  m.tc.resize(n);
  m.wt.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    m.et[i] = confidence.data[i] > threshold;
    m.tc[i] = confidence.data[n + i] > threshold;
    m.wt[i] = confidence.data[2 * n + i] > threshold;
    if (force_nested) {
      m.tc[i] |= m.et[i];
      m.wt[i] |= m.tc[i];
    }
  }
  return m;
}

NodeId dice_loss(Tape& t, NodeId pred, const DenseTensor& target, double eps) {
  const DenseTensor& p = t.val(pred);
  if (p.shape != target.shape || p.rank() < 2 || p.shape[0] != 3) {
    throw std::invalid_argument("dice_loss: pred and target must share a [3, ...] shape");
  }
  const std::size_t n = p.numel() / 3;
  std::array<double, 3> num{}, den{};
  for (std::size_t h = 0; h < 3; ++h) {
    double inter = 0.0, ysum = 0.0, psum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double y = target.data[h * n + i];
      const double yh = p.data[h * n + i];
      inter += y * yh;
      ysum += y;
      psum += yh;
    }
    num[h] = eps + 2.0 * inter;
    den[h] = eps + ysum + psum;
  }
  double loss = 1.0;
  for (std::size_t h = 0; h < 3; ++h) loss -= num[h] / den[h] / 3.0;

  return t.record(DenseTensor::scalar(loss), [pred, target, num, den](Tape& tp, NodeId self) {
    const double gl = tp.grad(self).data[0];
    DenseTensor& gp = tp.grad(pred);
    const std::size_t cn = target.numel() / 3;
    for (std::size_t h = 0; h < 3; ++h) {
      const double d2 = den[h] * den[h];
      for (std::size_t i = 0; i < cn; ++i) {
        const double y = target.data[h * cn + i];
        gp.data[h * cn + i] -= gl * (2.0 * y * den[h] - num[h]) / (3.0 * d2);
      }
    }
  });
}

double dice_score(const std::vector<std::uint8_t>& t, const std::vector<std::uint8_t>& t_hat) {
  check_mask_sizes(t, t_hat);
  const std::size_t nt = count_on(t);
  const std::size_t nh = count_on(t_hat);
  if (nt + nh == 0) return 1.0;
  return 2.0 * static_cast<double>(count_both(t, t_hat)) / static_cast<double>(nt + nh);
}

std::optional<double> sensitivity(const std::vector<std::uint8_t>& t,
                                  const std::vector<std::uint8_t>& t_hat) {
  check_mask_sizes(t, t_hat);
  const std::size_t nt = count_on(t);
  if (nt == 0) return std::nullopt;
  return static_cast<double>(count_both(t, t_hat)) / static_cast<double>(nt);
}

std::optional<double> specificity(const std::vector<std::uint8_t>& t,
                                  const std::vector<std::uint8_t>& t_hat) {
  check_mask_sizes(t, t_hat);
  const std::size_t neg = t.size() - count_on(t);
  if (neg == 0) return std::nullopt;
  std::size_t tn = 0;
  for (std::size_t i = 0; i < t.size(); ++i) tn += t[i] == 0 && t_hat[i] == 0;
  return static_cast<double>(tn) / static_cast<double>(neg);
}

std::vector<std::uint8_t> surface_mask(const std::vector<std::uint8_t>& mask,
                                       const Extents& dims) {
  if (mask.size() != spatial_numel(dims)) {
    throw std::invalid_argument("surface_mask: mask size does not match dims");
  }
  const std::size_t X = dims[0], Y = dims[1], Z = dims[2];
  std::vector<std::uint8_t> surf(mask.size(), 0);
  auto at = [&](std::size_t x, std::size_t y, std::size_t z) {
    return mask[(x * Y + y) * Z + z] != 0;
  };
  for (std::size_t x = 0; x < X; ++x) {
    for (std::size_t y = 0; y < Y; ++y) {
      for (std::size_t z = 0; z < Z; ++z) {
        if (!at(x, y, z)) continue;
        const bool boundary = x == 0 || x + 1 == X || y == 0 || y + 1 == Y || z == 0 ||
                              z + 1 == Z || !at(x - 1, y, z) || !at(x + 1, y, z) ||
                              !at(x, y - 1, z) || !at(x, y + 1, z) || !at(x, y, z - 1) ||
                              !at(x, y, z + 1);
        surf[(x * Y + y) * Z + z] = boundary;
      }
    }
  }
  return surf;
}

double hausdorff95(const std::vector<std::uint8_t>& t, const std::vector<std::uint8_t>& t_hat,
                   const Extents& dims) {
  check_mask_sizes(t, t_hat);
  const std::vector<std::uint8_t> s = surface_mask(t, dims);
  const std::vector<std::uint8_t> s_hat = surface_mask(t_hat, dims);
  const std::size_t n_s = count_on(s);
  const std::size_t n_hat = count_on(s_hat);
  if (n_s == 0 && n_hat == 0) return 0.0;
  if (n_s == 0 || n_hat == 0) {
    return std::sqrt(static_cast<double>(dims[0] * dims[0] + dims[1] * dims[1] +
                                         dims[2] * dims[2]));
  }

  auto directed = [&](const std::vector<std::uint8_t>& from,
                      const std::vector<std::uint8_t>& to) {
    const std::vector<double> edt = squared_edt(to, dims);
    std::vector<double> sq;
    for (std::size_t i = 0; i < from.size(); ++i) {
      if (from[i]) sq.push_back(edt[i]);
    }
    return percentile95(sq);
  };
  return std::max(directed(s, s_hat), directed(s_hat, s));
}

MetricsRecord evaluate_case(const std::vector<std::uint8_t>& pred,
                            const std::vector<std::uint8_t>& truth, const Extents& dims) {
  const SubregionMasks pm = label_to_subregions(pred, dims);
  const SubregionMasks tm = label_to_subregions(truth, dims);
  auto region = [&](const std::vector<std::uint8_t>& t, const std::vector<std::uint8_t>& p) {
    RegionMetrics r;
    r.dice = dice_score(t, p);
    r.sensitivity = sensitivity(t, p);
    r.specificity = specificity(t, p);
    r.hausdorff95 = hausdorff95(t, p, dims);
    return r;
  };
  MetricsRecord rec;
  rec.et = region(tm.et, pm.et);
  rec.tc = region(tm.tc, pm.tc);
  rec.wt = region(tm.wt, pm.wt);
  return rec;
}

std::string metrics_csv(const std::vector<std::pair<std::string, MetricsRecord>>& rows) {
  static const char* kRegions[3] = {"ET", "TC", "WT"};
  std::string out = "case_id,region,dice,sensitivity,specificity,hausdorff95\n";
  auto cell = [](std::optional<double> v) {
    if (!v || std::isnan(*v)) return std::string("nan");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return std::string(buf);
  };
  auto emit = [&](const std::string& id, const char* region, const RegionMetrics& r) {
    out += id + ',' + region + ',' + cell(r.dice) + ',' + cell(r.sensitivity) + ',' +
           cell(r.specificity) + ',' + cell(r.hausdorff95) + '\n';
  };
  struct Acc {
    double sum = 0.0;
    std::size_t n = 0;
    void add(std::optional<double> v) {
      if (v) {
        sum += *v;
        ++n;
      }
    }
    std::optional<double> mean() const {
      if (n == 0) return std::nullopt;
      return sum / static_cast<double>(n);
    }
  };
  Acc acc[3][4];
  for (const auto& [id, rec] : rows) {
    const RegionMetrics* regs[3] = {&rec.et, &rec.tc, &rec.wt};
    for (int g = 0; g < 3; ++g) {
      emit(id, kRegions[g], *regs[g]);
      acc[g][0].add(regs[g]->dice);
      acc[g][1].add(regs[g]->sensitivity);
      acc[g][2].add(regs[g]->specificity);
      acc[g][3].add(regs[g]->hausdorff95);
    }
  }
  for (int g = 0; g < 3; ++g) {
    RegionMetrics mean;
    mean.dice = acc[g][0].mean().value_or(std::nan(""));
    mean.sensitivity = acc[g][1].mean();
    mean.specificity = acc[g][2].mean();
    mean.hausdorff95 = acc[g][3].mean().value_or(std::nan(""));
    emit("mean", kRegions[g], mean);
  }
  return out;
}

}  // namespace voxnas
