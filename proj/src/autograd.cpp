#include "gdvig/autograd.hpp"

#include "gdvig/error.hpp"

namespace gdvig {

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, false, {}, {}, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, false, {}, {}, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& param) {
  nodes_.push_back(Node{param.value, {}, param.trainable, false, {}, {}, &param});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  if (!value.all_finite()) throw NumericError(std::string(op) + ": non-finite value in output");
  Node node;
  node.value = std::move(value);
  for (const Var& in : inputs) {
    if (&in.tape() != this) throw std::logic_error(std::string(op) + ": input from a different tape");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var root) {
  if (root.value().size() != 1) {
    throw DimensionError("backward() without a seed needs a scalar root, got " + shape_str(root.shape()));
  }
  backward(root, Tensor(root.shape(), 1.0));
}

void Tape::backward(Var root, const Tensor& seed) {
  require_same_shape(root.shape(), seed.shape(), "backward seed");
  for (auto& n : nodes_) {
    n.grad = Tensor();
    n.has_grad = false;
  }
  Node& r = nodes_[root.id()];
  if (!r.requires_grad) return;
  r.grad = seed;
  r.has_grad = true;

  std::vector<Tensor*> grad_in;
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.has_grad) continue;
    if (!n.grad.all_finite()) throw NumericError("backward: non-finite gradient");
    if (n.param != nullptr) {
      Parameter& p = *n.param;
      if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape());
      auto dst = p.grad.data();
      auto src = n.grad.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
    if (!n.backward) continue;
    grad_in.assign(n.inputs.size(), nullptr);
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      Node& in = nodes_[n.inputs[k]];
      if (!in.requires_grad) continue;
      if (!in.has_grad) {
        in.grad = Tensor(in.value.shape());
        in.has_grad = true;
      }
      grad_in[k] = &in.grad;
    }
    n.backward(n.grad, grad_in);
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  return n.has_grad ? n.grad : Tensor(n.value.shape());
}

}  // namespace gdvig
