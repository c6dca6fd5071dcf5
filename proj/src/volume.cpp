#include "voxnas/volume.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "json.hpp"
#include "voxnas/errors.hpp"

namespace voxnas {

namespace fs = std::filesystem;
using json = nlohmann::json;

Extents VolumeCase::spatial() const {
  if (image.rank() != 4) throw DataError("case image must be rank 4, got " + shape_str(image.shape));
  return {image.shape[1], image.shape[2], image.shape[3]};
}

std::size_t VolumeCase::voxels() const {
  const Extents s = spatial();
  return s[0] * s[1] * s[2];
}

void validate_case(const VolumeCase& c) {
  if (c.image.rank() != 4 || c.image.shape[0] == 0) {
    throw DataError("case '" + c.case_id + "': image must be [m,Ds,Dc,Da]");
  }
  if (!c.modality_names.empty() && c.modality_names.size() != c.modalities()) {
    throw DataError("case '" + c.case_id + "': modality name count mismatch");
  }
  if (!c.has_label()) return;
  const std::size_t n = c.voxels();
  if (c.label.size() != n) {
    throw DataError("case '" + c.case_id + "': label size does not match image spatial size");
  }
  const std::size_t m = c.modalities();
  for (std::size_t v = 0; v < n; ++v) {
    const std::uint8_t l = c.label[v];
    if (l != 0 && l != 1 && l != 2 && l != 4) {
      throw DataError("case '" + c.case_id + "': illegal label value " + std::to_string(l));
    }
    if (l != 0) {
      bool any = false;
      for (std::size_t ch = 0; ch < m && !any; ++ch) any = c.image.data[ch * n + v] != 0.0;
      if (!any) throw DataError("case '" + c.case_id + "': label on all-zero background voxel");
    }
  }
}

NormStats compute_norm_stats(const std::vector<VolumeCase>& cases) {
  if (cases.empty()) throw DataError("compute_norm_stats: empty case list");
  const std::size_t m = cases.front().modalities();
  for (const VolumeCase& c : cases) {
    if (c.modalities() != m) throw DataError("compute_norm_stats: modality count mismatch");
  }

  NormStats st;
  st.mu.assign(m, 0.0);
  st.sigma.assign(m, 0.0);
  st.a_min.assign(m, 0.0);
  st.a_max.assign(m, 0.0);

  for (std::size_t ch = 0; ch < m; ++ch) {
    double sum = 0.0, lo = 0.0, hi = 0.0;
    std::size_t count = 0;
    for (const VolumeCase& c : cases) {
      const std::size_t n = c.voxels();
      for (std::size_t v = 0; v < n; ++v) {
        const double x = c.image.data[ch * n + v];
        if (x == 0.0) continue;
        if (count == 0) lo = hi = x;
        lo = std::min(lo, x);
        hi = std::max(hi, x);
        sum += x;
        ++count;
      }
    }
    if (count == 0) {
      throw DataError("compute_norm_stats: modality " + std::to_string(ch) + " is all zero");
    }
    const double mu = sum / static_cast<double>(count);
    double ss = 0.0;
    for (const VolumeCase& c : cases) {
      const std::size_t n = c.voxels();
      for (std::size_t v = 0; v < n; ++v) {
        const double x = c.image.data[ch * n + v];
        if (x == 0.0) continue;
        ss += (x - mu) * (x - mu);
      }
    }
    const double sigma = std::sqrt(ss / static_cast<double>(count));
    if (!(sigma > 0.0)) {
      throw DataError("compute_norm_stats: modality " + std::to_string(ch) +
                      " has zero variance over nonzero voxels");
    }
    st.mu[ch] = mu;
    st.sigma[ch] = sigma;
    st.a_min[ch] = (lo - mu) / sigma;
    st.a_max[ch] = (hi - mu) / sigma;
  }
  return st;
}

VolumeCase normalize(const VolumeCase& c, const NormStats& stats, double xi, double lambda) {
  const std::size_t m = c.modalities();
  if (stats.mu.size() != m) throw DataError("normalize: stats cover a different modality count");
  VolumeCase out = c;
  const std::size_t n = c.voxels();
  for (std::size_t ch = 0; ch < m; ++ch) {
    const double mu = stats.mu[ch], sigma = stats.sigma[ch];
    const double lo = stats.a_min[ch], hi = stats.a_max[ch];
    for (std::size_t v = 0; v < n; ++v) {
      const double x = c.image.data[ch * n + v];
      if (x == 0.0) continue;
      double z = (x - mu) / sigma;
      z = std::clamp(z, lo, hi);
      // xi*t + xi*lambda (not xi*(t+lambda)) so the default bounds round to
      // exactly [10, 110] at the interval ends
      out.image.data[ch * n + v] = xi * ((z - lo) / (hi - lo)) + xi * lambda;
    }
  }
  return out;
}

BrainCube detect_brain_cube(const VolumeCase& c) {
  const Extents s = c.spatial();
  const std::size_t m = c.modalities();
  const std::size_t n = s[0] * s[1] * s[2];
  std::array<std::size_t, 3> lo{s[0], s[1], s[2]};
  std::array<std::size_t, 3> hi{0, 0, 0};
  bool any = false;
  for (std::size_t i = 0; i < s[0]; ++i) {
    for (std::size_t j = 0; j < s[1]; ++j) {
      for (std::size_t k = 0; k < s[2]; ++k) {
        const std::size_t v = (i * s[1] + j) * s[2] + k;
        bool nz = false;
        for (std::size_t ch = 0; ch < m && !nz; ++ch) nz = c.image.data[ch * n + v] != 0.0;
        if (!nz) continue;
        any = true;
        const std::size_t p[3] = {i, j, k};
        for (int a = 0; a < 3; ++a) {
          lo[a] = std::min(lo[a], p[a]);
          hi[a] = std::max(hi[a], p[a]);
        }
      }
    }
  }
  if (!any) throw DataError("detect_brain_cube: case '" + c.case_id + "' is all zero");
  BrainCube cube;
  for (int a = 0; a < 3; ++a) {
    cube.start[a] = lo[a];
    cube.length[a] = hi[a] - lo[a] + 1;
  }
  return cube;
}

namespace {

const char* kStandardModalities[4] = {"t1", "t1gd", "t2", "flair"};

double quantize_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

VolumeCase synth_phantom(std::uint64_t seed, const Extents& dims, std::size_t m) {
  if (dims.size() != 3) throw DataError("synth_phantom: dims must have 3 axes");
  if (m == 0) throw DataError("synth_phantom: need at least one modality");
  for (std::size_t d : dims) {
    if (d < 20) {
      throw DataError("synth_phantom: extent " + std::to_string(d) +
                      " too small to contain the nested tumor ellipsoids (need >= 20 per axis)");
    }
  }

  Rng rng(seed);
  double center[3], brain[3], tcenter[3], wt[3], tc[3], et[3];
  for (int a = 0; a < 3; ++a) {
    const double d = static_cast<double>(dims[a]);
    center[a] = d * rng.uniform(0.47, 0.53);
    brain[a] = d * rng.uniform(0.34, 0.42);
  }
  for (int a = 0; a < 3; ++a) tcenter[a] = center[a] + brain[a] * rng.uniform(-0.15, 0.15);
  for (int a = 0; a < 3; ++a) wt[a] = brain[a] * rng.uniform(0.40, 0.52);
  for (int a = 0; a < 3; ++a) tc[a] = wt[a] * rng.uniform(0.62, 0.75);
  for (int a = 0; a < 3; ++a) et[a] = tc[a] * rng.uniform(0.50, 0.65);
  // floors keep every labeled shell at least one voxel thick on each axis
  for (int a = 0; a < 3; ++a) {
    et[a] = std::max(et[a], 1.0);
    tc[a] = std::max(tc[a], et[a] + 1.2);
    wt[a] = std::max(wt[a], tc[a] + 1.2);
  }

  VolumeCase c;
  c.image = DenseTensor({m, dims[0], dims[1], dims[2]});
  const std::size_t n = dims[0] * dims[1] * dims[2];
  c.label.assign(n, 0);
  char idbuf[32];
  std::snprintf(idbuf, sizeof(idbuf), "phantom_%08llu", static_cast<unsigned long long>(seed));
  c.case_id = idbuf;
  for (std::size_t ch = 0; ch < m; ++ch) {
    c.modality_names.push_back(ch < 4 ? kStandardModalities[ch] : "mod" + std::to_string(ch));
  }

  auto inside = [&](const double* ctr, const double* semi, std::size_t i, std::size_t j,
                    std::size_t k) {
    const double p[3] = {static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)};
    double r = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double t = (p[a] - ctr[a]) / semi[a];
      r += t * t;
    }
    return r < 1.0;
  };

  std::vector<std::uint8_t> in_brain(n, 0);
  for (std::size_t i = 0; i < dims[0]; ++i) {
    for (std::size_t j = 0; j < dims[1]; ++j) {
      for (std::size_t k = 0; k < dims[2]; ++k) {
        const std::size_t v = (i * dims[1] + j) * dims[2] + k;
        if (!inside(center, brain, i, j, k)) continue;
        in_brain[v] = 1;
        if (inside(tcenter, et, i, j, k)) {
          c.label[v] = 4;
        } else if (inside(tcenter, tc, i, j, k)) {
          c.label[v] = 1;
        } else if (inside(tcenter, wt, i, j, k)) {
          c.label[v] = 2;
        }
      }
    }
  }

  // subregion index: 0 = enhancing core (4), 1 = necrotic core (1), 2 = edema (2)
  const double offsets[3] = {0.5, 1.0, 1.5};
  for (std::size_t ch = 0; ch < m; ++ch) {
    for (std::size_t v = 0; v < n; ++v) {
      if (!in_brain[v]) continue;
      double val = 1.0 + rng.uniform(-0.15, 0.15);
      const std::uint8_t l = c.label[v];
      if (l != 0) {
        const std::size_t sub = l == 4 ? 0 : (l == 1 ? 1 : 2);
        val += offsets[(sub + ch) % 3];
      }
      c.image.data[ch * n + v] = quantize_f32(val);
    }
  }
  return c;
}

namespace {

std::vector<std::uint8_t> remap_label(const std::vector<std::uint8_t>& label,
                                      const std::vector<std::size_t>& src_index) {
  std::vector<std::uint8_t> out(src_index.size());
  for (std::size_t v = 0; v < out.size(); ++v) out[v] = label[src_index[v]];
  return out;
}

DenseTensor remap_image(const DenseTensor& image, const Extents& out_spatial,
                        const std::vector<std::size_t>& src_index) {
  const std::size_t m = image.shape[0];
  const std::size_t n_in = image.numel() / m;
  DenseTensor out({m, out_spatial[0], out_spatial[1], out_spatial[2]});
  const std::size_t n_out = src_index.size();
  for (std::size_t ch = 0; ch < m; ++ch) {
    for (std::size_t v = 0; v < n_out; ++v) {
      out.data[ch * n_out + v] = image.data[ch * n_in + src_index[v]];
    }
  }
  return out;
}

}  // namespace

VolumeCase apply_flip(const VolumeCase& c, const std::array<bool, 3>& axes) {
  const Extents s = c.spatial();
  std::vector<std::size_t> src;
  src.reserve(s[0] * s[1] * s[2]);
  for (std::size_t i = 0; i < s[0]; ++i) {
    const std::size_t si = axes[0] ? s[0] - 1 - i : i;
    for (std::size_t j = 0; j < s[1]; ++j) {
      const std::size_t sj = axes[1] ? s[1] - 1 - j : j;
      for (std::size_t k = 0; k < s[2]; ++k) {
        const std::size_t sk = axes[2] ? s[2] - 1 - k : k;
        src.push_back((si * s[1] + sj) * s[2] + sk);
      }
    }
  }
  VolumeCase out = c;
  out.image = remap_image(c.image, s, src);
  if (c.has_label()) out.label = remap_label(c.label, src);
  return out;
}

VolumeCase apply_rot90(const VolumeCase& c, int k) {
  const Extents s = c.spatial();
  k = ((k % 4) + 4) % 4;
  if (k == 0) return c;
  if (k % 2 == 1 && s[0] != s[1]) {
    throw std::invalid_argument("apply_rot90: odd quarter-turns need equal sagittal/coronal extents");
  }
  const Extents os = s;  // equal in-plane extents whenever shape changes would occur
  std::vector<std::size_t> src;
  src.reserve(s[0] * s[1] * s[2]);
  for (std::size_t i = 0; i < os[0]; ++i) {
    for (std::size_t j = 0; j < os[1]; ++j) {
      std::size_t si = i, sj = j;
      if (k == 1) {
        si = j;
        sj = s[1] - 1 - i;
      } else if (k == 2) {
        si = s[0] - 1 - i;
        sj = s[1] - 1 - j;
      } else if (k == 3) {
        si = s[0] - 1 - j;
        sj = i;
      }
      for (std::size_t kk = 0; kk < s[2]; ++kk) src.push_back((si * s[1] + sj) * s[2] + kk);
    }
  }
  VolumeCase out = c;
  out.image = remap_image(c.image, os, src);
  if (c.has_label()) out.label = remap_label(c.label, src);
  return out;
}

namespace {

struct WarpField {
  Extents dims;
  std::vector<double> disp;  // [3, Ds, Dc, Da] displacement per axis

  double at(int axis, std::size_t v) const { return disp[axis * (dims[0] * dims[1] * dims[2]) + v]; }
};

WarpField make_elastic_field(const Extents& dims, Rng& rng, double amp, std::size_t grid) {
  const std::size_t g = std::max<std::size_t>(grid, 2);
  std::size_t nn[3];
  for (int a = 0; a < 3; ++a) nn[a] = (dims[a] - 1) / g + 2;
  std::vector<double> nodes(3 * nn[0] * nn[1] * nn[2]);
  for (double& d : nodes) d = rng.uniform(-amp, amp);

  WarpField f;
  f.dims = dims;
  const std::size_t n = dims[0] * dims[1] * dims[2];
  f.disp.assign(3 * n, 0.0);
  auto node = [&](int axis, std::size_t i, std::size_t j, std::size_t k) {
    return nodes[((static_cast<std::size_t>(axis) * nn[0] + i) * nn[1] + j) * nn[2] + k];
  };
  for (std::size_t i = 0; i < dims[0]; ++i) {
    const double ti = static_cast<double>(i) / static_cast<double>(g);
    const std::size_t i0 = static_cast<std::size_t>(ti);
    const double fi = ti - static_cast<double>(i0);
    for (std::size_t j = 0; j < dims[1]; ++j) {
      const double tj = static_cast<double>(j) / static_cast<double>(g);
      const std::size_t j0 = static_cast<std::size_t>(tj);
      const double fj = tj - static_cast<double>(j0);
      for (std::size_t k = 0; k < dims[2]; ++k) {
        const double tk = static_cast<double>(k) / static_cast<double>(g);
        const std::size_t k0 = static_cast<std::size_t>(tk);
        const double fk = tk - static_cast<double>(k0);
        const std::size_t v = (i * dims[1] + j) * dims[2] + k;
        for (int a = 0; a < 3; ++a) {
          double acc = 0.0;
          for (int di = 0; di < 2; ++di) {
            for (int dj = 0; dj < 2; ++dj) {
              for (int dk = 0; dk < 2; ++dk) {
                const double w = (di ? fi : 1.0 - fi) * (dj ? fj : 1.0 - fj) * (dk ? fk : 1.0 - fk);
                acc += w * node(a, i0 + di, j0 + dj, k0 + dk);
              }
            }
          }
          f.disp[a * n + v] = acc;
        }
      }
    }
  }
  return f;
}

VolumeCase apply_elastic(const VolumeCase& c, const WarpField& f) {
  const Extents s = c.spatial();
  const std::size_t m = c.modalities();
  const std::size_t n = s[0] * s[1] * s[2];
  VolumeCase out = c;
  out.image.fill(0.0);
  if (c.has_label()) std::fill(out.label.begin(), out.label.end(), 0);

  auto sample = [&](std::size_t ch, double x, double y, double z) {
    const long i0 = static_cast<long>(std::floor(x));
    const long j0 = static_cast<long>(std::floor(y));
    const long k0 = static_cast<long>(std::floor(z));
    const double fx = x - static_cast<double>(i0);
    const double fy = y - static_cast<double>(j0);
    const double fz = z - static_cast<double>(k0);
    double acc = 0.0;
    for (int di = 0; di < 2; ++di) {
      for (int dj = 0; dj < 2; ++dj) {
        for (int dk = 0; dk < 2; ++dk) {
          const long ii = i0 + di, jj = j0 + dj, kk = k0 + dk;
          if (ii < 0 || jj < 0 || kk < 0 || ii >= static_cast<long>(s[0]) ||
              jj >= static_cast<long>(s[1]) || kk >= static_cast<long>(s[2])) {
            continue;
          }
          const double w =
              (di ? fx : 1.0 - fx) * (dj ? fy : 1.0 - fy) * (dk ? fz : 1.0 - fz);
          acc += w * c.image.data[ch * n + (static_cast<std::size_t>(ii) * s[1] +
                                           static_cast<std::size_t>(jj)) *
                                              s[2] +
                                  static_cast<std::size_t>(kk)];
        }
      }
    }
    return acc;
  };

  for (std::size_t i = 0; i < s[0]; ++i) {
    for (std::size_t j = 0; j < s[1]; ++j) {
      for (std::size_t k = 0; k < s[2]; ++k) {
        const std::size_t v = (i * s[1] + j) * s[2] + k;
        const double x = static_cast<double>(i) + f.at(0, v);
        const double y = static_cast<double>(j) + f.at(1, v);
        const double z = static_cast<double>(k) + f.at(2, v);
        for (std::size_t ch = 0; ch < m; ++ch) {
          out.image.data[ch * n + v] = sample(ch, x, y, z);
        }
        if (c.has_label()) {
          const long ri = std::lround(x), rj = std::lround(y), rk = std::lround(z);
          if (ri >= 0 && rj >= 0 && rk >= 0 && ri < static_cast<long>(s[0]) &&
              rj < static_cast<long>(s[1]) && rk < static_cast<long>(s[2])) {
            out.label[v] = c.label[(static_cast<std::size_t>(ri) * s[1] +
                                    static_cast<std::size_t>(rj)) *
                                       s[2] +
                                   static_cast<std::size_t>(rk)];
          }
        }
      }
    }
  }

  // a warped label can land on an interpolated-to-zero image voxel; labels are
  // clipped to the warped image support so the case invariant survives
  for (std::size_t v = 0; v < n && c.has_label(); ++v) {
    if (out.label[v] == 0) continue;
    bool any = false;
    for (std::size_t ch = 0; ch < m && !any; ++ch) any = out.image.data[ch * n + v] != 0.0;
    if (!any) out.label[v] = 0;
  }
  return out;
}

}  // namespace

VolumeCase augment(const VolumeCase& c, std::uint64_t seed, const AugmentConfig& cfg) {
  if (!c.has_label()) throw DataError("augment: case '" + c.case_id + "' has no label");
  Rng rng(seed);
  VolumeCase out = c;
  if (cfg.flip) {
    const std::array<bool, 3> axes{rng.bernoulli(0.5), rng.bernoulli(0.5), rng.bernoulli(0.5)};
    out = apply_flip(out, axes);
  }
  if (cfg.rotate) {
    const Extents s = out.spatial();
    const int k = s[0] == s[1] ? static_cast<int>(rng.uniform_int(0, 3))
                               : 2 * static_cast<int>(rng.uniform_int(0, 1));
    out = apply_rot90(out, k);
  }
  if (cfg.elastic) {
    const WarpField f = make_elastic_field(out.spatial(), rng, cfg.elastic_amp, cfg.elastic_grid);
    out = apply_elastic(out, f);
  }
  return out;
}

namespace {

void write_vvol(const std::string& path, const json& header, const void* payload,
                std::size_t bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  const std::string h = header.dump();
  f.write(h.data(), static_cast<std::streamsize>(h.size()));
  f.put('\n');
  f.write(static_cast<const char*>(payload), static_cast<std::streamsize>(bytes));
  if (!f) throw DataError("write failed for '" + path + "'");
}

struct VvolFile {
  json header;
  std::vector<char> payload;
};

VvolFile read_vvol(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(f, line)) throw DataError("'" + path + "': missing header line");
  VvolFile out;
  try {
    out.header = json::parse(line);
  } catch (const json::exception& e) {
    throw DataError("'" + path + "': malformed header: " + e.what());
  }
  out.payload.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  return out;
}

struct VvolHeader {
  Extents dims;
  std::size_t channels;
  std::string dtype, kind, case_id;
  std::vector<std::string> modalities;
};

VvolHeader parse_header(const json& h, const std::string& path) {
  const std::set<std::string> allowed{"version", "dims",       "channels", "dtype",
                                      "kind",    "modalities", "case_id"};
  for (const auto& [key, _] : h.items()) {
    if (!allowed.count(key)) throw DataError("'" + path + "': unknown header key '" + key + "'");
  }
  try {
    if (h.at("version").get<int>() != 1) throw DataError("'" + path + "': unsupported version");
    VvolHeader out;
    for (const auto& d : h.at("dims")) {
      const long long v = d.get<long long>();
      if (v < 1) throw DataError("'" + path + "': non-positive dim");
      out.dims.push_back(static_cast<std::size_t>(v));
    }
    if (out.dims.size() != 3) throw DataError("'" + path + "': dims must have 3 axes");
    out.channels = h.at("channels").get<std::size_t>();
    if (out.channels == 0) throw DataError("'" + path + "': zero channels");
    out.dtype = h.at("dtype").get<std::string>();
    if (out.dtype != "f32" && out.dtype != "u8") {
      throw DataError("'" + path + "': unknown dtype '" + out.dtype + "'");
    }
    out.kind = h.at("kind").get<std::string>();
    if (out.kind != "image" && out.kind != "label") {
      throw DataError("'" + path + "': unknown kind '" + out.kind + "'");
    }
    out.modalities = h.at("modalities").get<std::vector<std::string>>();
    out.case_id = h.at("case_id").get<std::string>();
    return out;
  } catch (const json::exception& e) {
    throw DataError("'" + path + "': malformed header: " + e.what());
  }
}

}  // namespace

std::string image_path_for(const std::string& dir, const std::string& case_id) {
  return (fs::path(dir) / (case_id + "_image.vvol")).string();
}

std::string label_path_for(const std::string& dir, const std::string& case_id) {
  return (fs::path(dir) / (case_id + "_label.vvol")).string();
}

void write_case(const VolumeCase& c, const std::string& dir) {
  validate_case(c);
  std::error_code ec;
  fs::create_directories(dir, ec);
  const Extents s = c.spatial();
  const std::size_t n = c.voxels();

  json ih{{"version", 1},
          {"dims", {s[0], s[1], s[2]}},
          {"channels", c.modalities()},
          {"dtype", "f32"},
          {"kind", "image"},
          {"modalities", c.modality_names},
          {"case_id", c.case_id}};
  std::vector<float> fdata(c.image.numel());
  for (std::size_t i = 0; i < fdata.size(); ++i) fdata[i] = static_cast<float>(c.image.data[i]);
  write_vvol(image_path_for(dir, c.case_id), ih, fdata.data(), fdata.size() * sizeof(float));

  if (c.has_label()) {
    json lh{{"version", 1},
            {"dims", {s[0], s[1], s[2]}},
            {"channels", 1},
            {"dtype", "u8"},
            {"kind", "label"},
            {"modalities", json::array()},
            {"case_id", c.case_id}};
    write_vvol(label_path_for(dir, c.case_id), lh, c.label.data(), n);
  }
}

VolumeCase read_case(const std::string& image_path, const std::string& label_path) {
  const VvolFile img = read_vvol(image_path);
  const VvolHeader ih = parse_header(img.header, image_path);
  if (ih.kind != "image" || ih.dtype != "f32") {
    throw DataError("'" + image_path + "': expected an f32 image file");
  }
  const std::size_t n = ih.dims[0] * ih.dims[1] * ih.dims[2];
  if (img.payload.size() != ih.channels * n * sizeof(float)) {
    throw DataError("'" + image_path + "': payload length does not match header dims");
  }
  VolumeCase c;
  c.image = DenseTensor({ih.channels, ih.dims[0], ih.dims[1], ih.dims[2]});
  for (std::size_t i = 0; i < c.image.numel(); ++i) {
    float v;
    std::memcpy(&v, img.payload.data() + i * sizeof(float), sizeof(float));
    c.image.data[i] = static_cast<double>(v);
  }
  c.modality_names = ih.modalities;
  c.case_id = ih.case_id;

  if (!label_path.empty()) {
    const VvolFile lbl = read_vvol(label_path);
    const VvolHeader lh = parse_header(lbl.header, label_path);
    if (lh.kind != "label" || lh.dtype != "u8" || lh.channels != 1) {
      throw DataError("'" + label_path + "': expected a u8 single-channel label file");
    }
    if (lh.dims != ih.dims) throw DataError("'" + label_path + "': dims differ from the image");
    if (lbl.payload.size() != n) {
      throw DataError("'" + label_path + "': payload length does not match header dims");
    }
    c.label.assign(lbl.payload.begin(), lbl.payload.end());
  }
  validate_case(c);
  return c;
}

VolumeCase read_case(const std::string& image_path) {
  std::string label_path;
  const std::string suffix = "_image.vvol";
  if (image_path.size() > suffix.size() &&
      image_path.compare(image_path.size() - suffix.size(), suffix.size(), suffix) == 0) {
    std::string candidate = image_path.substr(0, image_path.size() - suffix.size()) + "_label.vvol";
    if (fs::exists(candidate)) label_path = candidate;
  }
  return read_case(image_path, label_path);
}

void write_label(const LabelVolume& l, const std::string& dir) {
  if (l.dims.size() != 3) throw DataError("label volume needs 3 spatial axes");
  const std::size_t n = l.dims[0] * l.dims[1] * l.dims[2];
  if (l.label.size() != n) throw DataError("label payload does not match dims");
  for (const std::uint8_t v : l.label) {
    if (v != 0 && v != 1 && v != 2 && v != 4) throw DataError("illegal label value");
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  json h{{"version", 1},
         {"dims", {l.dims[0], l.dims[1], l.dims[2]}},
         {"channels", 1},
         {"dtype", "u8"},
         {"kind", "label"},
         {"modalities", json::array()},
         {"case_id", l.case_id}};
  write_vvol(label_path_for(dir, l.case_id), h, l.label.data(), n);
}

LabelVolume read_label(const std::string& path) {
  const VvolFile f = read_vvol(path);
  const VvolHeader h = parse_header(f.header, path);
  if (h.kind != "label" || h.dtype != "u8" || h.channels != 1) {
    throw DataError("'" + path + "': expected a u8 single-channel label file");
  }
  const std::size_t n = h.dims[0] * h.dims[1] * h.dims[2];
  if (f.payload.size() != n) {
    throw DataError("'" + path + "': payload length does not match header dims");
  }
  LabelVolume out;
  out.dims = h.dims;
  out.case_id = h.case_id;
  out.label.assign(f.payload.begin(), f.payload.end());
  for (const std::uint8_t v : out.label) {
    if (v != 0 && v != 1 && v != 2 && v != 4) {
      throw DataError("'" + path + "': illegal label value");
    }
  }
  return out;
}

std::vector<VolumeCase> read_cases(const std::string& dir) {
  if (!fs::is_directory(dir)) throw DataError("'" + dir + "' is not a directory");
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > 11 && name.compare(name.size() - 11, 11, "_image.vvol") == 0) {
      paths.push_back(entry.path().string());
    }
  }
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw DataError("'" + dir + "' contains no *_image.vvol cases");
  std::vector<VolumeCase> cases;
  for (const std::string& p : paths) cases.push_back(read_case(p));
  return cases;
}

}  // namespace voxnas
