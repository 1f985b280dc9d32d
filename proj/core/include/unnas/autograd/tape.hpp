#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "unnas/autograd/tensor.hpp"

namespace unnas {

/// Trainable tensor with its gradient and optimizer state.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  std::vector<T> grad;
  std::vector<T> velocity;  // momentum buffer, or Adam first moment
  std::vector<T> second;    // Adam second moment
  std::int64_t steps = 0;
  bool requires_grad = true;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.data.size(), T{0}) {}

  void zero_grad() { grad.assign(value.data.size(), T{0}); }
};

template <typename T>
class Tape;

/// Handle to a value recorded on a tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  [[nodiscard]] Tape<T>& tape() const { return *tape_; }
  [[nodiscard]] std::size_t id() const { return id_; }
  [[nodiscard]] const Tensor<T>& value() const;
  [[nodiscard]] const Shape& shape() const { return value().shape; }
  [[nodiscard]] bool requires_grad() const;
  [[nodiscard]] bool valid() const { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Topological record of executed ops, rebuilt for every step.
///
/// Nodes are appended in execution order, so reverse iteration is a valid
/// reverse-topological order. A node's gradient buffer is allocated the first
/// time a consumer propagates into it; nodes never reached keep an empty buffer.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(bool grad_enabled = true);

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  Var<T> input(Tensor<T> value, bool requires_grad = true);
  /// Registers `p` (once per tape) and returns its leaf.
  Var<T> param(Parameter<T>& p);

  /// Reverse pass from a scalar. Every parameter registered on this tape ends
  /// with `grad` equal to d(loss)/d(param), zero when unreachable. Returns the
  /// parameters the loss actually depends on.
  std::vector<Parameter<T>*> backward(Var<T> loss);

  /// Gradient of the last backward pass w.r.t. any node (zeros if unreached).
  [[nodiscard]] std::vector<T> grad(Var<T> v) const;

  [[nodiscard]] bool grad_enabled() const { return grad_enabled_; }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

  /// Debug-time finite check of every recorded value and propagated gradient.
  void set_check_finite(bool on) { check_finite_ = on; }

  // Op-author interface.
  Var<T> record(Tensor<T> value, const std::vector<std::size_t>& parents, BackwardFn fn);
  [[nodiscard]] const Tensor<T>& value(std::size_t id) const;
  [[nodiscard]] bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer of node `id`, zero-allocated on first use.
  std::vector<T>& grad_buffer(std::size_t id);
  [[nodiscard]] const std::vector<T>& grad_of(std::size_t id) const { return nodes_[id].grad; }

 private:
  struct Node {
    Tensor<T> own;
    const Tensor<T>* external = nullptr;
    std::vector<T> grad;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, std::size_t> param_ids_;
  bool grad_enabled_;
  bool check_finite_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

template <typename T>
bool Var<T>::requires_grad() const {
  return tape_->requires_grad(id_);
}

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace unnas
