#pragma once

#include <cstdint>
#include <vector>

#include "voxnas/tape.hpp"

namespace voxnas {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected adaptive moment optimizer over a fixed parameter list.
/// step() consumes the accumulated gradients and zeroes them.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg);

  void step();
  void zero_grads();

  const std::vector<Parameter*>& params() const { return params_; }
  std::uint64_t steps() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<DenseTensor> m_, v_;
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
};

}  // namespace voxnas
