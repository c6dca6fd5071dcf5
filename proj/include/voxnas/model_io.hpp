#pragma once

#include <optional>
#include <string>
#include <vector>

#include "voxnas/backbone.hpp"
#include "voxnas/genotype.hpp"
#include "voxnas/tape.hpp"
#include "voxnas/volume.hpp"

namespace voxnas {

enum class ArtifactKind { kSearchState, kModel };

/// Pooled normalization context a trained model carries for inference.
struct NormContext {
  NormStats stats;
  double xi = 100.0;
  double lambda = 0.1;
};

/// One-file checkpoint (".vmod"): a JSON manifest line followed by every
/// parameter tensor as raw little-endian f64 in manifest order. A search
/// state holds alphas plus kernels; a model additionally pins the genotype
/// it was built from and the normalization context of its training set.
struct ModelArtifact {
  ArtifactKind kind = ArtifactKind::kModel;
  BackboneConfig backbone;
  std::optional<GenotypePair> genotype;
  std::optional<NormContext> norm;
  std::vector<std::string> param_names;  // creation order
  std::vector<DenseTensor> param_values;
};

/// Copies every parameter of `store` into an artifact shell; genotype and
/// norm stay unset.
ModelArtifact snapshot(ArtifactKind kind, const BackboneConfig& bcfg, ParameterStore& store);

void save_artifact(const ModelArtifact& a, const std::string& path);
ModelArtifact load_artifact(const std::string& path);

/// Copies artifact tensors into same-named store parameters; the store must
/// hold exactly the artifact's names with matching shapes.
void restore_params(const ModelArtifact& a, ParameterStore& store);

}  // namespace voxnas
