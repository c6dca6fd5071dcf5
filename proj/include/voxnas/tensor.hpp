#ifndef VOXNAS_TENSOR_HPP
#define VOXNAS_TENSOR_HPP

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace voxnas {

using Extents = std::vector<std::size_t>;

/// N-dimensional dense array of doubles, row-major (last axis fastest).
/// All extents are >= 1 and data.size() == product(shape).
struct DenseTensor {
  Extents shape;
  std::vector<double> data;

  DenseTensor() = default;
  explicit DenseTensor(Extents s, double fill = 0.0);
  DenseTensor(Extents s, std::vector<double> values);

  static DenseTensor scalar(double v) { return DenseTensor({1}, {v}); }

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  bool same_shape(const DenseTensor& o) const { return shape == o.shape; }
  bool is_scalar() const { return data.size() == 1; }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  DenseTensor zeros_like() const { return DenseTensor(shape); }
  void fill(double v);
};

std::size_t shape_numel(const Extents& shape);

/// "CxXxYxZ" style rendering for error messages.
std::string shape_str(const Extents& shape);

}  // namespace voxnas

#endif  // VOXNAS_TENSOR_HPP
