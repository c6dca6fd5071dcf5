#include "voxnas/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "voxnas/errors.hpp"
#include "voxnas/metrics.hpp"
#include "voxnas/patching.hpp"

namespace voxnas {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw DataError("write failed for '" + path + "'");
}

std::size_t read_sz(const json& j, const char* key, std::size_t fallback) {
  if (!j.contains(key)) return fallback;
  const long long v = j.at(key).get<long long>();
  if (v < 0) throw ConfigError(std::string("config: '") + key + "' must be nonnegative");
  return static_cast<std::size_t>(v);
}

std::uint64_t read_u64(const json& j, const char* key, std::uint64_t fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<std::uint64_t>();
}

double read_num(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) throw ConfigError(std::string("config: '") + key + "' must be a number");
  return j.at(key).get<double>();
}

bool read_flag(const json& j, const char* key, bool fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_boolean()) throw ConfigError(std::string("config: '") + key + "' must be a boolean");
  return j.at(key).get<bool>();
}

std::string read_str(const json& j, const char* key, std::string fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<std::string>();
}

Extents read_patch(const json& j, const char* key, Extents fallback) {
  if (!j.contains(key)) return fallback;
  const json& arr = j.at(key);
  if (!arr.is_array() || arr.size() != 3) {
    throw ConfigError(std::string("config: '") + key + "' must be a 3-element array");
  }
  Extents out;
  for (const auto& d : arr) {
    const long long v = d.get<long long>();
    if (v < 1) throw ConfigError(std::string("config: '") + key + "' entries must be positive");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::string history_jsonl(const std::vector<EpochRecord>& history) {
  std::string out;
  for (const EpochRecord& r : history) {
    json j{{"epoch", r.epoch},
           {"hybrid_loss", r.hybrid_loss ? json(*r.hybrid_loss) : json()},
           {"kernel_loss", r.kernel_loss ? json(*r.kernel_loss) : json()},
           {"genotype_hash", r.genotype_hash}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw DataError("cannot create directory '" + dir + "'");
}

}  // namespace

RunConfig run_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  const std::set<std::string> allowed{
      "modalities",    "nodes",          "theta",           "depth",
      "label_channels", "n_epochs",      "count_threshold", "hybrid_fraction",
      "hybrid_lr",     "kernel_lr",      "search_patch",    "train_epochs",
      "train_lr",      "train_patch",    "xi",              "lambda",
      "loss_eps",      "threshold",      "augment_flip",    "augment_rotate",
      "augment_elastic", "data_dir",     "out_dir",         "seed"};
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("config: unknown key '" + key + "'");
  }
  RunConfig c;
  try {
    c.modalities = read_sz(j, "modalities", c.modalities);
    c.nodes = read_sz(j, "nodes", c.nodes);
    c.theta = read_sz(j, "theta", c.theta);
    c.depth = read_sz(j, "depth", c.depth);
    c.label_channels = read_sz(j, "label_channels", c.label_channels);
    c.n_epochs = read_sz(j, "n_epochs", c.n_epochs);
    c.count_threshold = read_sz(j, "count_threshold", c.count_threshold);
    c.hybrid_fraction = read_num(j, "hybrid_fraction", c.hybrid_fraction);
    c.hybrid_lr = read_num(j, "hybrid_lr", c.hybrid_lr);
    c.kernel_lr = read_num(j, "kernel_lr", c.kernel_lr);
    c.search_patch = read_patch(j, "search_patch", c.search_patch);
    c.train_epochs = read_sz(j, "train_epochs", c.train_epochs);
    c.train_lr = read_num(j, "train_lr", c.train_lr);
    c.train_patch = read_patch(j, "train_patch", c.train_patch);
    c.xi = read_num(j, "xi", c.xi);
    c.lambda = read_num(j, "lambda", c.lambda);
    c.loss_eps = read_num(j, "loss_eps", c.loss_eps);
    c.threshold = read_num(j, "threshold", c.threshold);
    c.augment_flip = read_flag(j, "augment_flip", c.augment_flip);
    c.augment_rotate = read_flag(j, "augment_rotate", c.augment_rotate);
    c.augment_elastic = read_flag(j, "augment_elastic", c.augment_elastic);
    c.data_dir = read_str(j, "data_dir", c.data_dir);
    c.out_dir = read_str(j, "out_dir", c.out_dir);
    c.seed = read_u64(j, "seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

std::string run_config_to_json(const RunConfig& c) {
  json j{{"modalities", c.modalities},
         {"nodes", c.nodes},
         {"theta", c.theta},
         {"depth", c.depth},
         {"label_channels", c.label_channels},
         {"n_epochs", c.n_epochs},
         {"count_threshold", c.count_threshold},
         {"hybrid_fraction", c.hybrid_fraction},
         {"hybrid_lr", c.hybrid_lr},
         {"kernel_lr", c.kernel_lr},
         {"search_patch", c.search_patch},
         {"train_epochs", c.train_epochs},
         {"train_lr", c.train_lr},
         {"train_patch", c.train_patch},
         {"xi", c.xi},
         {"lambda", c.lambda},
         {"loss_eps", c.loss_eps},
         {"threshold", c.threshold},
         {"augment_flip", c.augment_flip},
         {"augment_rotate", c.augment_rotate},
         {"augment_elastic", c.augment_elastic},
         {"data_dir", c.data_dir},
         {"out_dir", c.out_dir},
         {"seed", c.seed}};
  return j.dump(2) + "\n";
}

RunConfig load_run_config(const std::string& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return run_config_from_json(text);
}

BackboneConfig backbone_config(const RunConfig& c) {
  return BackboneConfig{c.modalities, c.nodes, c.theta, c.depth, c.label_channels};
}

SearchConfig search_config(const RunConfig& c) {
  SearchConfig s;
  s.n_epochs = c.n_epochs;
  s.count_threshold = c.count_threshold;
  s.hybrid_fraction = c.hybrid_fraction;
  s.hybrid_opt.lr = c.hybrid_lr;
  s.kernel_opt.lr = c.kernel_lr;
  s.patch_shape = c.search_patch;
  s.loss_eps = c.loss_eps;
  s.seed = c.seed;
  return s;
}

void cmd_synth(std::size_t count, const Extents& dims, std::uint64_t seed,
               const std::string& out_dir, std::size_t modalities) {
  ensure_dir(out_dir);
  for (std::size_t i = 0; i < count; ++i) {
    write_case(synth_phantom(seed + i, dims, modalities), out_dir);
  }
}

SearchResult cmd_search(const RunConfig& cfg) {
  if (cfg.data_dir.empty() || cfg.out_dir.empty()) {
    throw ConfigError("search: data_dir and out_dir are required");
  }
  std::vector<VolumeCase> cases = read_cases(cfg.data_dir);
  if (cases.size() < 2) {
    throw DataError("search needs at least 2 cases, '" + cfg.data_dir + "' has " +
                    std::to_string(cases.size()));
  }
  const NormStats stats = compute_norm_stats(cases);
  for (VolumeCase& c : cases) c = normalize(c, stats, cfg.xi, cfg.lambda);

  const BackboneConfig bc = backbone_config(cfg);
  ParameterStore store;
  const SearchResult res = search(cases, search_config(cfg), bc, store);

  ensure_dir(cfg.out_dir);
  write_text(join(cfg.out_dir, "genotype.json"), genotype_to_json(res.genotype) + "\n");
  write_text(join(cfg.out_dir, "search_history.jsonl"), history_jsonl(res.history));
  ModelArtifact a = snapshot(ArtifactKind::kSearchState, bc, store);
  a.genotype = res.genotype;
  a.norm = NormContext{stats, cfg.xi, cfg.lambda};
  save_artifact(a, join(cfg.out_dir, "search_state.vmod"));
  return res;
}

GenotypePair cmd_derive(const std::string& state_path, const std::string& genotype_path) {
  const ModelArtifact a = load_artifact(state_path);
  if (a.kind != ArtifactKind::kSearchState) {
    throw DataError("'" + state_path + "': not a search state artifact");
  }
  GenotypePair g;
  if (a.genotype) {
    g = *a.genotype;
  } else {
    ParameterStore store;
    Rng rng(0);  // values are overwritten by the restore
    Network net(store, a.backbone, rng);
    restore_params(a, store);
    g = net.derive();
  }
  if (!genotype_path.empty()) {
    const fs::path parent = fs::path(genotype_path).parent_path();
    if (!parent.empty()) ensure_dir(parent.string());
    write_text(genotype_path, genotype_to_json(g) + "\n");
  }
  return g;
}

std::vector<double> cmd_train(const RunConfig& cfg, const std::string& genotype_path) {
  if (cfg.data_dir.empty() || cfg.out_dir.empty()) {
    throw ConfigError("train: data_dir and out_dir are required");
  }
  const GenotypePair g = genotype_from_json(read_text(genotype_path));
  const BackboneConfig bc = backbone_config(cfg);
  if (g.dc.nodes.size() != bc.nodes || g.uc.nodes.size() != bc.nodes) {
    throw ConfigError("genotype describes " + std::to_string(g.dc.nodes.size()) +
                      "-node cells, the config wants " + std::to_string(bc.nodes));
  }
  std::vector<VolumeCase> cases = read_cases(cfg.data_dir);
  const NormStats stats = compute_norm_stats(cases);
  for (VolumeCase& c : cases) c = normalize(c, stats, cfg.xi, cfg.lambda);

  Rng root(cfg.seed);
  Rng init_rng = root.fork(1);
  ParameterStore store;
  Network net(store, bc, init_rng, g);
  AugmentConfig aug;
  aug.flip = cfg.augment_flip;
  aug.rotate = cfg.augment_rotate;
  aug.elastic = cfg.augment_elastic;
  const bool use_aug = aug.flip || aug.rotate || aug.elastic;
  const std::vector<double> losses =
      train_network(net, store, cases, cfg.train_epochs, cfg.train_patch,
                    AdamConfig{cfg.train_lr, 0.9, 0.999, 1e-8}, cfg.seed,
                    use_aug ? &aug : nullptr, cfg.loss_eps);

  ensure_dir(cfg.out_dir);
  ModelArtifact a = snapshot(ArtifactKind::kModel, bc, store);
  a.genotype = g;
  a.norm = NormContext{stats, cfg.xi, cfg.lambda};
  save_artifact(a, join(cfg.out_dir, "model.vmod"));
  std::string hist;
  for (std::size_t e = 0; e < losses.size(); ++e) {
    hist += json{{"epoch", e + 1}, {"loss", losses[e]}}.dump();
    hist += '\n';
  }
  write_text(join(cfg.out_dir, "train_history.jsonl"), hist);
  return losses;
}

std::string cmd_predict(const RunConfig& cfg, const std::string& model_path,
                        const std::string& image_path, const std::string& out_dir) {
  const ModelArtifact a = load_artifact(model_path);
  if (a.kind != ArtifactKind::kModel) throw DataError("'" + model_path + "': not a model artifact");
  VolumeCase c = read_case(image_path);
  if (c.modalities() != a.backbone.modalities) {
    throw DataError("case '" + c.case_id + "' has " + std::to_string(c.modalities()) +
                    " modalities, the model wants " + std::to_string(a.backbone.modalities));
  }
  c = normalize(c, a.norm->stats, a.norm->xi, a.norm->lambda);

  ParameterStore store;
  Rng rng(0);  // values are overwritten by the restore
  Network net(store, a.backbone, rng, *a.genotype);
  restore_params(a, store);

  const Extents vol = c.spatial();
  const PatchGrid grid = plan_patches(detect_brain_cube(c), cfg.train_patch, vol);
  std::vector<std::pair<std::array<std::size_t, 3>, DenseTensor>> preds;
  preds.reserve(grid.total());
  for (const auto& index : grid.all_indices()) {
    preds.emplace_back(index, net.predict(extract_patch(c.image, grid, index)));
  }
  const DenseTensor confidence = stitch(preds, grid);

  ensure_dir(out_dir);
  write_label({prediction_to_label(confidence, cfg.threshold), vol, c.case_id}, out_dir);
  return label_path_for(out_dir, c.case_id);
}

std::string cmd_evaluate(const std::string& pred_dir, const std::string& truth_dir,
                         const std::string& csv_path) {
  if (!fs::is_directory(pred_dir)) throw DataError("'" + pred_dir + "' is not a directory");
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(pred_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > 11 && name.compare(name.size() - 11, 11, "_label.vvol") == 0) {
      paths.push_back(entry.path().string());
    }
  }
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw DataError("'" + pred_dir + "' contains no *_label.vvol predictions");

  std::vector<std::pair<std::string, MetricsRecord>> rows;
  for (const std::string& p : paths) {
    const LabelVolume pred = read_label(p);
    const std::string tpath = label_path_for(truth_dir, pred.case_id);
    if (!fs::exists(tpath)) throw DataError("no truth label for case '" + pred.case_id + "'");
    const LabelVolume truth = read_label(tpath);
    if (truth.dims != pred.dims) {
      throw DataError("case '" + pred.case_id + "': prediction and truth dims differ");
    }
    rows.emplace_back(pred.case_id, evaluate_case(pred.label, truth.label, pred.dims));
  }
  const std::string csv = metrics_csv(rows);
  if (!csv_path.empty()) write_text(csv_path, csv);
  return csv;
}

}  // namespace voxnas
