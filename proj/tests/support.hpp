#ifndef VOXNAS_TESTS_SUPPORT_HPP
#define VOXNAS_TESTS_SUPPORT_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "voxnas/ops.hpp"
#include "voxnas/rng.hpp"
#include "voxnas/tape.hpp"
#include "voxnas/tensor.hpp"

namespace voxnas::testing {

inline DenseTensor random_tensor(Extents shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  DenseTensor t(std::move(shape));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

/// Random values bounded away from zero, for probing ops with a kink at 0.
inline DenseTensor random_tensor_nonzero(Extents shape, Rng& rng, double min_mag = 0.2) {
  DenseTensor t(std::move(shape));
  for (double& v : t.data) {
    const double mag = min_mag + (1.0 - min_mag) * rng.uniform();
    v = rng.bernoulli() ? mag : -mag;
  }
  return t;
}

/// Builds the graph under test from already-pushed input nodes and returns a
/// scalar output node. May lift extra Parameters internally (see `params`).
using GraphFn = std::function<NodeId(Tape&, const std::vector<NodeId>&)>;

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
};

/// Central-difference check of d(out)/d(input_i) for every input element and
/// every element of every listed Parameter. `max_per_tensor` caps the probed
/// coordinates per tensor (evenly strided) to keep big-module checks fast.
inline GradCheckResult grad_check(const GraphFn& fn, std::vector<DenseTensor> inputs,
                                  std::vector<Parameter*> params = {}, double h = 1e-5,
                                  double denom_floor = 1e-3,
                                  std::size_t max_per_tensor = static_cast<std::size_t>(-1)) {
  std::vector<DenseTensor> analytic_inputs;
  std::vector<DenseTensor> analytic_params;
  {
    for (Parameter* p : params) p->zero_grad();
    Tape t;
    std::vector<NodeId> ids;
    ids.reserve(inputs.size());
    for (const auto& in : inputs) ids.push_back(t.constant(in));
    const NodeId out = fn(t, ids);
    t.backward(out);
    for (NodeId id : ids) {
      analytic_inputs.push_back(t.has_grad(id) ? t.grad(id) : t.val(id).zeros_like());
    }
    for (Parameter* p : params) analytic_params.push_back(p->grad);
    for (Parameter* p : params) p->zero_grad();
  }

  auto eval = [&]() {
    Tape t;
    std::vector<NodeId> ids;
    ids.reserve(inputs.size());
    for (const auto& in : inputs) ids.push_back(t.constant(in));
    return t.val(fn(t, ids)).data[0];
  };

  GradCheckResult res;
  auto probe = [&](double* slot, double analytic) {
    const double orig = *slot;
    *slot = orig + h;
    const double fp = eval();
    *slot = orig - h;
    const double fm = eval();
    *slot = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    const double rel = std::abs(analytic - numeric) /
                       std::max(std::abs(analytic) + std::abs(numeric), denom_floor);
    res.max_rel_err = std::max(res.max_rel_err, rel);
    ++res.checked;
  };
  auto probe_tensor = [&](std::vector<double>& data, const DenseTensor& analytic) {
    const std::size_t n = data.size();
    const std::size_t step = n <= max_per_tensor ? 1 : (n + max_per_tensor - 1) / max_per_tensor;
    for (std::size_t j = 0; j < n; j += step) probe(&data[j], analytic.data[j]);
  };

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    probe_tensor(inputs[i].data, analytic_inputs[i]);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    probe_tensor(params[i]->value.data, analytic_params[i]);
  }
  return res;
}

}  // namespace voxnas::testing

#endif  // VOXNAS_TESTS_SUPPORT_HPP
