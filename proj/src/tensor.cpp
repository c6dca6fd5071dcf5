#include "voxnas/tensor.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace voxnas {

std::size_t shape_numel(const Extents& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return shape.empty() ? 0 : n;
}

std::string shape_str(const Extents& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s.empty() ? "()" : s;
}

namespace {
void check_extents(const Extents& s) {
  if (s.empty()) throw std::invalid_argument("tensor shape must not be empty");
  for (std::size_t e : s) {
    if (e == 0) throw std::invalid_argument("tensor extents must be >= 1");
  }
}
}  // namespace

DenseTensor::DenseTensor(Extents s, double fill) : shape(std::move(s)) {
  check_extents(shape);
  data.assign(shape_numel(shape), fill);
}

DenseTensor::DenseTensor(Extents s, std::vector<double> values)
    : shape(std::move(s)), data(std::move(values)) {
  check_extents(shape);
  if (data.size() != shape_numel(shape)) {
    throw std::invalid_argument("tensor data length does not match shape " + shape_str(shape));
  }
}

void DenseTensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

}  // namespace voxnas
