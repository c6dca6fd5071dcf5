#ifndef VOXNAS_TAPE_HPP
#define VOXNAS_TAPE_HPP

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "voxnas/tensor.hpp"

namespace voxnas {

/// Hybrid parameters are the architecture weights (alpha); everything else
/// trainable (conv weights, normalization affine terms) is a kernel parameter.
enum class ParamKind { kKernel, kHybrid };

struct Parameter {
  std::string name;
  DenseTensor value;
  DenseTensor grad;
  ParamKind kind = ParamKind::kKernel;
  std::uint64_t id = 0;

  void zero_grad() { grad.fill(0.0); }
};

/// Owns parameters with stable addresses, in creation order.
class ParameterStore {
 public:
  Parameter& create(std::string name, DenseTensor init, ParamKind kind);
  Parameter* find(std::string_view name);
  std::vector<Parameter*> of_kind(ParamKind kind);
  std::vector<Parameter*> all();
  std::size_t size() const { return params_.size(); }

 private:
  std::deque<Parameter> params_;
  std::uint64_t next_id_ = 1;
};

/// Record of one forward pass. Operations append nodes holding their output
/// value and a closure implementing the backward rule; backward() runs the
/// closures in reverse and accumulates leaf gradients into their parameters.
///
/// A tape serves exactly one forward/backward cycle: call reset() before
/// reuse. Gradient buffers are allocated lazily, so nodes that cannot reach
/// the loss never run their backward rule.
class Tape {
 public:
  using NodeId = std::uint32_t;
  using BackFn = std::function<void(Tape&, NodeId self)>;

  /// Leaf that does not propagate gradient to any parameter.
  NodeId constant(DenseTensor value);

  /// Leaf carrying a snapshot of p's current value; backward() adds the
  /// accumulated node gradient into p.grad.
  NodeId leaf(Parameter& p);

  NodeId record(DenseTensor value, BackFn back);

  const DenseTensor& val(NodeId id) const { return nodes_[id].value; }

  /// Gradient buffer for a node, zero-initialized on first touch.
  DenseTensor& grad(NodeId id);
  bool has_grad(NodeId id) const { return !nodes_[id].grad.data.empty(); }

  /// Reverse sweep from a scalar loss node. Calling it twice without an
  /// intervening reset() is an error.
  void backward(NodeId loss);

  void reset();
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    DenseTensor value;
    DenseTensor grad;  // empty until first accumulation
    BackFn back;
    Parameter* bound = nullptr;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

using NodeId = Tape::NodeId;

}  // namespace voxnas

#endif  // VOXNAS_TAPE_HPP
