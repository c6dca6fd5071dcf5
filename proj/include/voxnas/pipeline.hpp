#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voxnas/model_io.hpp"
#include "voxnas/search.hpp"

namespace voxnas {

/// Everything a run needs, loadable from one JSON file with flat keys that
/// mirror the field names; unknown keys are rejected. Flags may override
/// individual fields after loading.
struct RunConfig {
  // backbone
  std::size_t modalities = 4;
  std::size_t nodes = 3;
  std::size_t theta = 2;
  std::size_t depth = 2;
  std::size_t label_channels = 3;
  // search
  std::size_t n_epochs = 60;
  std::size_t count_threshold = 20;
  double hybrid_fraction = 0.2;
  double hybrid_lr = 3e-3;
  double kernel_lr = 1e-3;
  Extents search_patch{32, 32, 32};
  // retraining
  std::size_t train_epochs = 300;
  double train_lr = 1e-3;
  Extents train_patch{64, 64, 64};
  // normalization and loss
  double xi = 100.0;
  double lambda = 0.1;
  double loss_eps = 1e-6;
  double threshold = 0.5;
  // augmentation (retraining only)
  bool augment_flip = false;
  bool augment_rotate = false;
  bool augment_elastic = false;
  // paths and seeding
  std::string data_dir;
  std::string out_dir;
  std::uint64_t seed = 0;
};

RunConfig run_config_from_json(const std::string& text);
std::string run_config_to_json(const RunConfig& c);
RunConfig load_run_config(const std::string& path);

BackboneConfig backbone_config(const RunConfig& c);
SearchConfig search_config(const RunConfig& c);

/// Writes `count` phantom cases (image + label pairs) into out_dir,
/// deterministically in `seed`; case i uses seed + i.
void cmd_synth(std::size_t count, const Extents& dims, std::uint64_t seed,
               const std::string& out_dir, std::size_t modalities = 4);

/// Runs the architecture search over cfg.data_dir and writes genotype.json,
/// search_history.jsonl and search_state.vmod into cfg.out_dir.
SearchResult cmd_search(const RunConfig& cfg);

/// Extracts the genotype from a saved search state. States written by
/// cmd_search carry the chosen genotype verbatim; otherwise the alphas are
/// restored and re-derived.
GenotypePair cmd_derive(const std::string& state_path, const std::string& genotype_path);

/// Retrains a derived network on cfg.data_dir and writes model.vmod plus
/// train_history.jsonl into cfg.out_dir; returns the per-epoch losses.
std::vector<double> cmd_train(const RunConfig& cfg, const std::string& genotype_path);

/// Patch-wise inference over one image: normalize with the stats stored in
/// the model, forward every patch, stitch by averaging, threshold, encode.
/// Writes "<case_id>_label.vvol" into out_dir and returns its path.
std::string cmd_predict(const RunConfig& cfg, const std::string& model_path,
                        const std::string& image_path, const std::string& out_dir);

/// Scores every "*_label.vvol" in pred_dir against its counterpart in
/// truth_dir; returns the metrics CSV and writes it to csv_path when given.
std::string cmd_evaluate(const std::string& pred_dir, const std::string& truth_dir,
                         const std::string& csv_path = "");

}  // namespace voxnas
