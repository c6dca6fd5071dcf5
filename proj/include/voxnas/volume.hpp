#ifndef VOXNAS_VOLUME_HPP
#define VOXNAS_VOLUME_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "voxnas/rng.hpp"
#include "voxnas/tensor.hpp"

namespace voxnas {

/// One subject: multimodal image [m, Ds, Dc, Da] plus an optional label
/// volume over the same spatial grid with values in {0, 1, 2, 4}.
struct VolumeCase {
  DenseTensor image;
  std::vector<std::uint8_t> label;  // empty when absent, else Ds*Dc*Da values
  std::vector<std::string> modality_names;
  std::string case_id;

  bool has_label() const { return !label.empty(); }
  std::size_t modalities() const { return image.shape.empty() ? 0 : image.shape[0]; }
  Extents spatial() const;
  std::size_t voxels() const;
};

/// Throws DataError when label values or label/background support are invalid.
void validate_case(const VolumeCase& c);

/// Per-modality pooled statistics of the nonzero voxels of a training set.
struct NormStats {
  std::vector<double> mu;
  std::vector<double> sigma;
  std::vector<double> a_min;  // min z-score over the pool
  std::vector<double> a_max;
};

/// Tight bounding box of the union of nonzero voxels across modalities.
struct BrainCube {
  std::array<std::size_t, 3> start{};
  std::array<std::size_t, 3> length{};
};

NormStats compute_norm_stats(const std::vector<VolumeCase>& cases);

/// Brain-wise normalization: z-score against pooled stats, then min-max
/// scaling into [xi*lambda, xi*(1+lambda)]; background zeros stay zero.
/// Z-scores outside [a_min, a_max] (unseen at stats time) are clamped.
VolumeCase normalize(const VolumeCase& c, const NormStats& stats, double xi = 100.0,
                     double lambda = 0.1);

BrainCube detect_brain_cube(const VolumeCase& c);

/// Deterministic synthetic case: ellipsoidal brain on zero background with
/// three nested tumor ellipsoids (labels 4 c {1,4} c {1,2,4}); each modality
/// offsets a different subregion so labels are learnable from intensity.
VolumeCase synth_phantom(std::uint64_t seed, const Extents& dims, std::size_t m = 4);

struct AugmentConfig {
  bool flip = false;
  bool rotate = false;   // 90-degree multiples in the axial plane
  bool elastic = false;  // smooth random warp, nearest-neighbor labels
  double elastic_amp = 2.0;
  std::size_t elastic_grid = 8;
};

/// Applies one random spatial transform, identical for image and label.
VolumeCase augment(const VolumeCase& c, std::uint64_t seed, const AugmentConfig& cfg);

VolumeCase apply_flip(const VolumeCase& c, const std::array<bool, 3>& axes);
/// Rotation by 90*k degrees in the axial plane (sagittal/coronal axes).
/// Odd k requires equal sagittal and coronal extents.
VolumeCase apply_rot90(const VolumeCase& c, int k);

/// .vvol container: one JSON header line, then a raw little-endian payload
/// (f32 for images, u8 for labels), row-major with channel slowest.
void write_case(const VolumeCase& c, const std::string& dir);
VolumeCase read_case(const std::string& image_path);
VolumeCase read_case(const std::string& image_path, const std::string& label_path);

std::string image_path_for(const std::string& dir, const std::string& case_id);
std::string label_path_for(const std::string& dir, const std::string& case_id);

/// All "*_image.vvol" cases in a directory, sorted by case id.
std::vector<VolumeCase> read_cases(const std::string& dir);

/// Standalone label volume, the form predictions are exchanged in.
struct LabelVolume {
  std::vector<std::uint8_t> label;
  Extents dims;  // three spatial axes
  std::string case_id;
};

/// Writes "<case_id>_label.vvol" into dir.
void write_label(const LabelVolume& l, const std::string& dir);
LabelVolume read_label(const std::string& path);

}  // namespace voxnas

#endif  // VOXNAS_VOLUME_HPP
