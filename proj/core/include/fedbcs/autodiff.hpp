#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fedbcs/tensor.hpp"

namespace fedbcs {

/// A trainable tensor with its accumulated gradient.
struct Parameter {
  std::string id;
  Tensor value;
  Tensor gradient;

  Parameter() = default;
  Parameter(std::string identifier, Tensor initial)
      : id(std::move(identifier)), value(std::move(initial)), gradient(Tensor::zeros(value.shape())) {}

  void zero_grad() { gradient.fill(Real{0}); }
};

/// Identifier-ordered parameter collection. std::map keeps element
/// addresses stable, which the tape relies on.
using ParameterStore = std::map<std::string, Parameter>;

/// Plain identifier -> value mapping; what clients and server exchange.
using NamedTensors = std::map<std::string, Tensor>;

NamedTensors snapshot(const ParameterStore& store);
void load(ParameterStore& store, const NamedTensors& values);
void zero_grads(ParameterStore& store);
std::size_t parameter_count(const ParameterStore& store);

class Tape;

/// Handle to a node on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t index() const { return index_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

/// Records differentiable ops in execution order. backward() replays them
/// in exact reverse order and accumulates into bound Parameters.
class Tape {
 public:
  /// Receives the gradient of the node's output; pushes gradients into the
  /// node's inputs through Tape::accumulate.
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to `param`; its gradient is added to param.gradient by
  /// backward(). The Parameter must outlive the tape's backward pass.
  Var parameter(Parameter& param);
  /// Leaf that receives a gradient but is not bound to a Parameter.
  Var variable(Tensor value);

  /// Appends an op result. `inputs` decide whether the node needs a
  /// gradient at all; `fn` may be empty for non-differentiable results.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn, const char* op_name);
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn, const char* op_name);

  bool requires_grad(Var v) const { return nodes_[v.index()].requires_grad; }
  void accumulate(Var v, const Tensor& grad);
  /// Lazily allocated gradient buffer of a node that requires grad.
  Tensor& grad_buffer(Var v);

  void backward(Var loss);
  /// Gradient held by a node after backward(); zeros if none reached it.
  Tensor grad(Var v) const;

  const Tensor& value(std::size_t index) const { return nodes_[index].value; }
  std::size_t size() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }
  void reset();

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  Var push(Node node);

  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

inline const Tensor& Var::value() const { return tape_->value(index_); }

}  // namespace fedbcs
