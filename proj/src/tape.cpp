#include "voxnas/tape.hpp"

#include <stdexcept>

namespace voxnas {

Parameter& ParameterStore::create(std::string name, DenseTensor init, ParamKind kind) {
  if (find(name) != nullptr) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
  Parameter p;
  p.name = std::move(name);
  p.grad = init.zeros_like();
  p.value = std::move(init);
  p.kind = kind;
  p.id = next_id_++;
  params_.push_back(std::move(p));
  return params_.back();
}

Parameter* ParameterStore::find(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

std::vector<Parameter*> ParameterStore::of_kind(ParamKind kind) {
  std::vector<Parameter*> out;
  for (auto& p : params_) {
    if (p.kind == kind) out.push_back(&p);
  }
  return out;
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

NodeId Tape::constant(DenseTensor value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, nullptr});
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::leaf(Parameter& p) {
  nodes_.push_back(Node{p.value, {}, nullptr, &p});
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::record(DenseTensor value, BackFn back) {
  nodes_.push_back(Node{std::move(value), {}, std::move(back), nullptr});
  return static_cast<NodeId>(nodes_.size() - 1);
}

DenseTensor& Tape::grad(NodeId id) {
  Node& n = nodes_[id];
  if (n.grad.data.empty()) n.grad = n.value.zeros_like();
  return n.grad;
}

void Tape::backward(NodeId loss) {
  if (consumed_) {
    throw std::logic_error("backward called twice on the same tape; reset() first");
  }
  if (loss >= nodes_.size()) throw std::out_of_range("loss node id out of range");
  if (!nodes_[loss].value.is_scalar()) {
    throw std::invalid_argument("backward requires a scalar loss node");
  }
  consumed_ = true;
  grad(loss)[0] = 1.0;
  for (std::size_t i = loss + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.data.empty()) continue;  // unreachable from the loss
    if (n.back) n.back(*this, static_cast<NodeId>(i));
  }
  for (Node& n : nodes_) {
    if (n.bound != nullptr && !n.grad.data.empty()) {
      for (std::size_t j = 0; j < n.grad.numel(); ++j) n.bound->grad[j] += n.grad[j];
    }
  }
}

void Tape::reset() {
  nodes_.clear();
  consumed_ = false;
}

}  // namespace voxnas
