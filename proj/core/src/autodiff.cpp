#include "fedbcs/autodiff.hpp"

#include "fedbcs/errors.hpp"

namespace fedbcs {

NamedTensors snapshot(const ParameterStore& store) {
  NamedTensors out;
  for (const auto& [id, p] : store) out.emplace(id, p.value);
  return out;
}

void load(ParameterStore& store, const NamedTensors& values) {
  if (values.size() != store.size()) {
    throw DimensionError("parameter set size mismatch: model has " + std::to_string(store.size()) +
                         ", input has " + std::to_string(values.size()));
  }
  for (auto& [id, p] : store) {
    auto it = values.find(id);
    if (it == values.end()) throw DimensionError("missing parameter '" + id + "'");
    require_same_shape(p.value, it->second, id.c_str());
    p.value = it->second;
  }
}

void zero_grads(ParameterStore& store) {
  for (auto& [id, p] : store) p.zero_grad();
}

std::size_t parameter_count(const ParameterStore& store) {
  std::size_t n = 0;
  for (const auto& [id, p] : store) n += p.value.size();
  return n;
}

Var Tape::push(Node node) {
  if (backward_done_) throw ContractError("tape already consumed by backward(); call reset()");
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::parameter(Parameter& param) {
  Node n;
  n.value = param.value;
  n.requires_grad = true;
  n.param = &param;
  return push(std::move(n));
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn, const char* op_name) {
  return record(std::move(value), std::vector<Var>(inputs), std::move(fn), op_name);
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn, const char* op_name) {
  check_finite(value, op_name);
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    if (&in.tape() != this) throw ContractError(std::string(op_name) + ": input from another tape");
    n.requires_grad = n.requires_grad || nodes_[in.index()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

Tensor& Tape::grad_buffer(Var v) {
  Node& n = nodes_[v.index()];
  if (!n.has_grad) {
    n.grad = Tensor::zeros(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::accumulate(Var v, const Tensor& grad) {
  Node& n = nodes_[v.index()];
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    require_same_shape(n.value, grad, "gradient accumulate");
    n.grad = grad;
    n.has_grad = true;
  } else {
    n.grad += grad;
  }
}

void Tape::backward(Var loss) {
  if (backward_done_) throw ContractError("backward() called twice without reset()");
  if (&loss.tape() != this) throw ContractError("loss belongs to another tape");
  if (nodes_.empty()) throw ContractError("backward() on an empty tape");
  if (loss.value().size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  backward_done_ = true;
  if (!nodes_[loss.index()].requires_grad) return;

  nodes_[loss.index()].grad = Tensor::full(loss.shape(), Real{1});
  nodes_[loss.index()].has_grad = true;

  for (std::size_t i = loss.index() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad) continue;
    // Callbacks only write to strictly earlier nodes, so n.grad stays put.
    if (n.backward) n.backward(*this, n.grad);
    if (n.param != nullptr) n.param->gradient += n.grad;
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.index()];
  if (!n.has_grad) return Tensor::zeros(n.value.shape());
  return n.grad;
}

void Tape::reset() {
  nodes_.clear();
  backward_done_ = false;
}

}  // namespace fedbcs
