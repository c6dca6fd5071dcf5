#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "voxnas/errors.hpp"
#include "voxnas/pipeline.hpp"

namespace {

using namespace voxnas;

Extents to_extents(const std::vector<long long>& dims) {
  Extents out;
  for (const long long v : dims) {
    if (v < 1) throw ConfigError("--dims entries must be positive");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"Differentiable architecture search and training for 3-D segmentation"};
  app.require_subcommand(1);

  std::string config_path, out_dir, data_dir, genotype_path, state_path, model_path, image_path,
      pred_dir, truth_dir;
  std::uint64_t seed = 0;
  std::size_t count = 4, modalities = 4;
  std::vector<long long> dims{48, 48, 48};
  double threshold = 0.5;

  CLI::App* synth = app.add_subcommand("synth", "Write deterministic phantom cases");
  synth->add_option("--count", count, "Cases to write")->capture_default_str();
  synth->add_option("--dims", dims, "Spatial extents")->expected(3)->capture_default_str();
  synth->add_option("--modalities", modalities, "Image channels")->capture_default_str();
  synth->add_option("--seed", seed, "Base seed; case i uses seed+i")->capture_default_str();
  synth->add_option("--out", out_dir, "Output directory")->required();

  CLI::App* search_cmd = app.add_subcommand("search", "Run the architecture search");
  search_cmd->add_option("--config", config_path, "Run config JSON")->required();
  CLI::Option* s_seed = search_cmd->add_option("--seed", seed, "Override the config seed");
  CLI::Option* s_out = search_cmd->add_option("--out", out_dir, "Override the output directory");
  CLI::Option* s_data = search_cmd->add_option("--data", data_dir, "Override the data directory");

  CLI::App* derive_cmd = app.add_subcommand("derive", "Extract a genotype from a search state");
  derive_cmd->add_option("state", state_path, "search_state.vmod path")->required();
  derive_cmd->add_option("--out", out_dir, "Directory for genotype.json")->required();

  CLI::App* train_cmd = app.add_subcommand("train", "Retrain a derived network");
  train_cmd->add_option("--config", config_path, "Run config JSON")->required();
  train_cmd->add_option("--genotype", genotype_path, "Genotype JSON path")->required();
  CLI::Option* t_seed = train_cmd->add_option("--seed", seed, "Override the config seed");
  CLI::Option* t_out = train_cmd->add_option("--out", out_dir, "Override the output directory");
  CLI::Option* t_data = train_cmd->add_option("--data", data_dir, "Override the data directory");

  CLI::App* predict_cmd = app.add_subcommand("predict", "Segment one case with a trained model");
  predict_cmd->add_option("--model", model_path, "model.vmod path")->required();
  predict_cmd->add_option("--image", image_path, "*_image.vvol path")->required();
  predict_cmd->add_option("--config", config_path, "Run config JSON (patch shape, threshold)");
  predict_cmd->add_option("--out", out_dir, "Output directory")->required();
  CLI::Option* p_thr = predict_cmd->add_option("--threshold", threshold, "Override the threshold");

  CLI::App* eval_cmd = app.add_subcommand("evaluate", "Score predictions against truth labels");
  eval_cmd->add_option("--pred", pred_dir, "Directory of predicted labels")->required();
  eval_cmd->add_option("--truth", truth_dir, "Directory of truth labels")->required();
  CLI::Option* e_out = eval_cmd->add_option("--out", out_dir, "Directory for metrics.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (synth->parsed()) {
    cmd_synth(count, to_extents(dims), seed, out_dir, modalities);
    std::cout << "wrote " << count << " cases to " << out_dir << "\n";
    return 0;
  }
  if (search_cmd->parsed()) {
    RunConfig cfg = load_run_config(config_path);
    if (*s_seed) cfg.seed = seed;
    if (*s_out) cfg.out_dir = out_dir;
    if (*s_data) cfg.data_dir = data_dir;
    const SearchResult res = cmd_search(cfg);
    std::cout << (res.early_stopped ? "early stop" : "fallback to most common") << " after "
              << res.history.size() << " epochs; genotype " << genotype_hash(res.genotype)
              << "\nwrote genotype.json, search_history.jsonl, search_state.vmod to "
              << cfg.out_dir << "\n";
    return 0;
  }
  if (derive_cmd->parsed()) {
    const std::string path = out_dir + "/genotype.json";
    cmd_derive(state_path, path);
    std::cout << "wrote " << path << "\n";
    return 0;
  }
  if (train_cmd->parsed()) {
    RunConfig cfg = load_run_config(config_path);
    if (*t_seed) cfg.seed = seed;
    if (*t_out) cfg.out_dir = out_dir;
    if (*t_data) cfg.data_dir = data_dir;
    const std::vector<double> losses = cmd_train(cfg, genotype_path);
    if (!losses.empty()) std::cout << "final mean loss " << losses.back() << "\n";
    std::cout << "wrote model.vmod, train_history.jsonl to " << cfg.out_dir << "\n";
    return 0;
  }
  if (predict_cmd->parsed()) {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (*p_thr) cfg.threshold = threshold;
    std::cout << "wrote " << cmd_predict(cfg, model_path, image_path, out_dir) << "\n";
    return 0;
  }
  if (eval_cmd->parsed()) {
    const std::string csv_path = *e_out ? out_dir + "/metrics.csv" : std::string();
    std::cout << cmd_evaluate(pred_dir, truth_dir, csv_path);
    if (!csv_path.empty()) std::cout << "wrote " << csv_path << "\n";
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const voxnas::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const voxnas::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const voxnas::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
