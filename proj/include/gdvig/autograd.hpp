#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "gdvig/tensor.hpp"

namespace gdvig {

/// A named trainable (or buffer) tensor that outlives individual tapes.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;
};

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const { return id_; }
  Tape& tape() const { return *tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Operations append nodes in execution order, so the
/// node list is topologically sorted and backward is a single reverse sweep.
class Tape {
 public:
  /// grad_in[k] is null when input k does not need a gradient; otherwise it
  /// is a same-shape accumulator the rule must add into.
  using BackwardFn = std::function<void(const Tensor& grad_out, std::span<Tensor* const> grad_in)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var leaf(Tensor value);
  /// Gradients reaching this node are added into param.grad by backward().
  Var param(Parameter& param);

  /// Appends an op result. Throws NumericError naming `op` if value has NaN/Inf.
  Var record(const char* op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);

  /// Seeds the (scalar) root with 1 and sweeps backward once.
  void backward(Var root);
  /// Seeds root with an arbitrary same-shape gradient.
  void backward(Var root, const Tensor& seed);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  /// Gradient after backward(); zeros when nothing reached the node.
  Tensor grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  std::deque<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

}  // namespace gdvig
