#include "voxnas/model_io.hpp"

#include <cstring>
#include <fstream>
#include <set>

#include "json.hpp"
#include "voxnas/errors.hpp"

namespace voxnas {

using json = nlohmann::json;

namespace {

const char* kind_name(ArtifactKind k) {
  return k == ArtifactKind::kSearchState ? "search_state" : "model";
}

ArtifactKind kind_from_name(const std::string& s, const std::string& path) {
  if (s == "search_state") return ArtifactKind::kSearchState;
  if (s == "model") return ArtifactKind::kModel;
  throw DataError("'" + path + "': unknown artifact kind '" + s + "'");
}

json backbone_to_json(const BackboneConfig& b) {
  return json{{"modalities", b.modalities},
              {"nodes", b.nodes},
              {"theta", b.theta},
              {"depth", b.depth},
              {"label_channels", b.label_channels}};
}

BackboneConfig backbone_from_json(const json& j, const std::string& path) {
  const std::set<std::string> allowed{"modalities", "nodes", "theta", "depth", "label_channels"};
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw DataError("'" + path + "': unknown backbone key '" + key + "'");
  }
  BackboneConfig b;
  b.modalities = j.at("modalities").get<std::size_t>();
  b.nodes = j.at("nodes").get<std::size_t>();
  b.theta = j.at("theta").get<std::size_t>();
  b.depth = j.at("depth").get<std::size_t>();
  b.label_channels = j.at("label_channels").get<std::size_t>();
  return b;
}

json norm_to_json(const NormContext& n) {
  return json{{"mu", n.stats.mu},     {"sigma", n.stats.sigma}, {"a_min", n.stats.a_min},
              {"a_max", n.stats.a_max}, {"xi", n.xi},           {"lambda", n.lambda}};
}

NormContext norm_from_json(const json& j, const std::string& path) {
  const std::set<std::string> allowed{"mu", "sigma", "a_min", "a_max", "xi", "lambda"};
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw DataError("'" + path + "': unknown norm key '" + key + "'");
  }
  NormContext n;
  n.stats.mu = j.at("mu").get<std::vector<double>>();
  n.stats.sigma = j.at("sigma").get<std::vector<double>>();
  n.stats.a_min = j.at("a_min").get<std::vector<double>>();
  n.stats.a_max = j.at("a_max").get<std::vector<double>>();
  n.xi = j.at("xi").get<double>();
  n.lambda = j.at("lambda").get<double>();
  const std::size_t m = n.stats.mu.size();
  if (m == 0 || n.stats.sigma.size() != m || n.stats.a_min.size() != m ||
      n.stats.a_max.size() != m) {
    throw DataError("'" + path + "': norm stat arrays disagree in length");
  }
  return n;
}

}  // namespace

ModelArtifact snapshot(ArtifactKind kind, const BackboneConfig& bcfg, ParameterStore& store) {
  ModelArtifact a;
  a.kind = kind;
  a.backbone = bcfg;
  for (Parameter* p : store.all()) {
    a.param_names.push_back(p->name);
    a.param_values.push_back(p->value);
  }
  return a;
}

void save_artifact(const ModelArtifact& a, const std::string& path) {
  if (a.param_names.size() != a.param_values.size()) {
    throw DataError("artifact names and values disagree in length");
  }
  if (a.kind == ArtifactKind::kModel && (!a.genotype || !a.norm)) {
    throw DataError("a model artifact needs both a genotype and norm stats");
  }
  json manifest{{"version", 1}, {"kind", kind_name(a.kind)}, {"backbone", backbone_to_json(a.backbone)}};
  if (a.genotype) {
    validate_genotype(*a.genotype);
    manifest["genotype"] = json::parse(genotype_to_json(*a.genotype));
  } else {
    manifest["genotype"] = nullptr;
  }
  manifest["norm"] = a.norm ? norm_to_json(*a.norm) : json(nullptr);
  json params = json::array();
  for (std::size_t i = 0; i < a.param_names.size(); ++i) {
    params.push_back(json{{"name", a.param_names[i]}, {"shape", a.param_values[i].shape}});
  }
  manifest["params"] = std::move(params);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  const std::string h = manifest.dump();
  f.write(h.data(), static_cast<std::streamsize>(h.size()));
  f.put('\n');
  for (const DenseTensor& t : a.param_values) {
    f.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
  if (!f) throw DataError("write failed for '" + path + "'");
}

ModelArtifact load_artifact(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(f, line)) throw DataError("'" + path + "': missing manifest line");
  json manifest;
  try {
    manifest = json::parse(line);
  } catch (const json::exception& e) {
    throw DataError("'" + path + "': malformed manifest: " + e.what());
  }

  const std::set<std::string> allowed{"version", "kind", "backbone", "genotype", "norm", "params"};
  for (const auto& [key, _] : manifest.items()) {
    if (!allowed.count(key)) throw DataError("'" + path + "': unknown manifest key '" + key + "'");
  }
  ModelArtifact a;
  try {
    if (manifest.at("version").get<int>() != 1) {
      throw DataError("'" + path + "': unsupported artifact version");
    }
    a.kind = kind_from_name(manifest.at("kind").get<std::string>(), path);
    a.backbone = backbone_from_json(manifest.at("backbone"), path);
    if (!manifest.at("genotype").is_null()) {
      a.genotype = genotype_from_json(manifest.at("genotype").dump());
    }
    if (!manifest.at("norm").is_null()) a.norm = norm_from_json(manifest.at("norm"), path);
    std::size_t total = 0;
    for (const json& p : manifest.at("params")) {
      a.param_names.push_back(p.at("name").get<std::string>());
      Extents shape;
      for (const auto& d : p.at("shape")) {
        const long long v = d.get<long long>();
        if (v < 1) throw DataError("'" + path + "': non-positive parameter dim");
        shape.push_back(static_cast<std::size_t>(v));
      }
      a.param_values.emplace_back(shape);
      total += a.param_values.back().numel();
    }
    std::vector<char> payload((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (payload.size() != total * sizeof(double)) {
      throw DataError("'" + path + "': payload length does not match the manifest");
    }
    std::size_t off = 0;
    for (DenseTensor& t : a.param_values) {
      std::memcpy(t.data.data(), payload.data() + off, t.data.size() * sizeof(double));
      off += t.data.size() * sizeof(double);
    }
  } catch (const json::exception& e) {
    throw DataError("'" + path + "': malformed manifest: " + e.what());
  }
  if (a.kind == ArtifactKind::kModel && (!a.genotype || !a.norm)) {
    throw DataError("'" + path + "': model artifact lacks a genotype or norm stats");
  }
  return a;
}

void restore_params(const ModelArtifact& a, ParameterStore& store) {
  if (store.size() != a.param_names.size()) {
    throw DataError("artifact holds " + std::to_string(a.param_names.size()) +
                    " parameters, the store " + std::to_string(store.size()));
  }
  for (std::size_t i = 0; i < a.param_names.size(); ++i) {
    Parameter* p = store.find(a.param_names[i]);
    if (p == nullptr) throw DataError("store lacks parameter '" + a.param_names[i] + "'");
    if (p->value.shape != a.param_values[i].shape) {
      throw DataError("parameter '" + a.param_names[i] + "' shape mismatch: store " +
                      shape_str(p->value.shape) + " vs artifact " +
                      shape_str(a.param_values[i].shape));
    }
    p->value = a.param_values[i];
  }
}

}  // namespace voxnas
