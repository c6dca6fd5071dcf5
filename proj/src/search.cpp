#include "voxnas/search.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "voxnas/errors.hpp"
#include "voxnas/metrics.hpp"
#include "voxnas/patching.hpp"

namespace voxnas {

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_search_data(
    std::size_t n_cases, double hybrid_fraction, std::uint64_t seed) {
  if (n_cases < 2) throw DataError("split_search_data: need at least 2 cases");
  if (!(hybrid_fraction > 0.0) || !(hybrid_fraction < 1.0)) {
    throw ConfigError("split_search_data: hybrid_fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> order(n_cases);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n_cases - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int64_t>(i)));
    std::swap(order[i], order[j]);
  }
  const double want = std::round(hybrid_fraction * static_cast<double>(n_cases));
  const std::size_t h =
      std::clamp<std::size_t>(static_cast<std::size_t>(want), 1, n_cases - 1);
  std::vector<std::size_t> hybrid(order.begin(), order.begin() + static_cast<long>(h));
  std::vector<std::size_t> kernel(order.begin() + static_cast<long>(h), order.end());
  std::sort(hybrid.begin(), hybrid.end());
  std::sort(kernel.begin(), kernel.end());
  return {std::move(hybrid), std::move(kernel)};
}

std::size_t GenotypeCounter::add(const GenotypePair& g) {
  std::string key = genotype_to_json(g);
  ++total_;
  for (Entry& e : entries_) {
    if (e.key == key) return ++e.count;
  }
  entries_.push_back(Entry{std::move(key), g, 1});
  return 1;
}

const GenotypePair& GenotypeCounter::most_common() const {
  if (entries_.empty()) throw std::logic_error("GenotypeCounter: empty");
  const Entry* best = &entries_.front();
  for (const Entry& e : entries_) {
    if (e.count > best->count) best = &e;
  }
  return best->genotype;
}

namespace {

struct CaseSampler {
  const VolumeCase* c;
  PatchGrid grid;
};

std::vector<CaseSampler> build_samplers(const std::vector<VolumeCase>& cases,
                                        const Extents& patch_shape) {
  std::vector<CaseSampler> out;
  out.reserve(cases.size());
  for (const VolumeCase& c : cases) {
    if (!c.has_label()) throw DataError("search: case '" + c.case_id + "' has no label");
    out.push_back({&c, plan_patches(detect_brain_cube(c), patch_shape, c.spatial())});
  }
  return out;
}

double patch_step(Network& net, Adam& opt, const CaseSampler& s, Rng& rng, double loss_eps,
                  const char* what) {
  const std::size_t pick =
      static_cast<std::size_t>(rng.uniform_int(0, static_cast<int64_t>(s.grid.total()) - 1));
  const auto index = s.grid.index_at(pick);
  const DenseTensor x = extract_patch(s.c->image, s.grid, index);
  const Extents pd{s.grid.axes[0].patch_len, s.grid.axes[1].patch_len, s.grid.axes[2].patch_len};
  const DenseTensor y =
      masks_to_tensor(label_to_subregions(extract_label_patch(s.c->label, s.grid, index), pd));

  Tape t;
  const NodeId loss = dice_loss(t, net.forward(t, t.constant(x)), y, loss_eps);
  const double lv = t.val(loss).data[0];
  if (!std::isfinite(lv)) {
    throw NumericError(std::string("search: ") + what + " loss diverged on case '" +
                       s.c->case_id + "'");
  }
  t.backward(loss);
  opt.step();
  return lv;
}

double run_pass(Network& net, Adam& opt, const std::vector<CaseSampler>& samplers,
                const std::vector<std::size_t>& subset, Rng& rng, double loss_eps,
                const char* what) {
  opt.zero_grads();
  double sum = 0.0;
  for (std::size_t ci : subset) sum += patch_step(net, opt, samplers[ci], rng, loss_eps, what);
  return sum / static_cast<double>(subset.size());
}

}  // namespace

SearchResult search(const std::vector<VolumeCase>& cases, const SearchConfig& scfg,
                    const BackboneConfig& bcfg, ParameterStore& store) {
  if (scfg.n_epochs < 1 || scfg.count_threshold < 1) {
    throw ConfigError("search: n_epochs and count_threshold must be at least 1");
  }
  if (store.size() != 0) throw ConfigError("search: the parameter store must start empty");
  const auto [hybrid_set, kernel_set] =
      split_search_data(cases.size(), scfg.hybrid_fraction, scfg.seed);

  Rng root(scfg.seed);
  Rng init_rng = root.fork(1);
  Rng sample_rng = root.fork(2);
  Network net(store, bcfg, init_rng);
  Adam hybrid_opt(store.of_kind(ParamKind::kHybrid), scfg.hybrid_opt);
  Adam kernel_opt(store.of_kind(ParamKind::kKernel), scfg.kernel_opt);
  const std::vector<CaseSampler> samplers = build_samplers(cases, scfg.patch_shape);

  GenotypeCounter counter;
  SearchResult res;
  for (std::size_t epoch = 1; epoch <= scfg.n_epochs; ++epoch) {
    GenotypePair g = net.derive();
    const std::size_t count = counter.add(g);
    const std::string hash = genotype_hash(g);
    if (count >= scfg.count_threshold) {
      res.history.push_back({epoch, std::nullopt, std::nullopt, hash});
      res.genotype = std::move(g);
      res.early_stopped = true;
      return res;
    }
    const double hl =
        run_pass(net, hybrid_opt, samplers, hybrid_set, sample_rng, scfg.loss_eps, "hybrid");
    const double kl =
        run_pass(net, kernel_opt, samplers, kernel_set, sample_rng, scfg.loss_eps, "kernel");
    res.history.push_back({epoch, hl, kl, hash});
  }
  res.genotype = counter.most_common();
  res.early_stopped = false;
  return res;
}

std::vector<double> train_network(Network& net, ParameterStore& store,
                                  const std::vector<VolumeCase>& cases, std::size_t epochs,
                                  const Extents& patch_shape, const AdamConfig& opt_cfg,
                                  std::uint64_t seed, const AugmentConfig* aug, double loss_eps) {
  if (cases.empty()) throw DataError("train: no cases");
  Adam opt(store.all(), opt_cfg);
  Rng root(seed);
  Rng sample_rng = root.fork(1);
  const std::vector<CaseSampler> samplers = build_samplers(cases, patch_shape);

  std::vector<double> history;
  history.reserve(epochs);
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    opt.zero_grads();
    double sum = 0.0;
    for (std::size_t ci = 0; ci < cases.size(); ++ci) {
      if (aug != nullptr) {
        const std::uint64_t aseed =
            seed ^ (0x9E3779B97F4A7C15ULL * (epoch * cases.size() + ci + 1));
        const VolumeCase ac = augment(cases[ci], aseed, *aug);
        const CaseSampler s{&ac, plan_patches(detect_brain_cube(ac), patch_shape, ac.spatial())};
        sum += patch_step(net, opt, s, sample_rng, loss_eps, "train");
      } else {
        sum += patch_step(net, opt, samplers[ci], sample_rng, loss_eps, "train");
      }
    }
    history.push_back(sum / static_cast<double>(cases.size()));
  }
  return history;
}

std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> kfold_split(
    std::size_t n_cases, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("kfold_split: k must be at least 2");
  if (n_cases < k) throw DataError("kfold_split: fewer cases than folds");
  std::vector<std::size_t> order(n_cases);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n_cases - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int64_t>(i)));
    std::swap(order[i], order[j]);
  }
  std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> folds(k);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t len = n_cases / k + (f < n_cases % k ? 1 : 0);
    auto& [train, val] = folds[f];
    val.assign(order.begin() + static_cast<long>(pos),
               order.begin() + static_cast<long>(pos + len));
    std::sort(val.begin(), val.end());
    pos += len;
    for (std::size_t i : order) {
      if (std::find(val.begin(), val.end(), i) == val.end()) train.push_back(i);
    }
    std::sort(train.begin(), train.end());
  }
  return folds;
}

}  // namespace voxnas
