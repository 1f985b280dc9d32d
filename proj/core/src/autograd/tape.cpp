#include "unnas/autograd/tape.hpp"

#include <cmath>
#include <sstream>

#include "unnas/error.hpp"

namespace unnas {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

namespace {

template <typename T>
bool all_finite(std::span<const T> xs) {
  for (T x : xs) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

template <typename T>
Tape<T>::Tape(bool grad_enabled)
    : grad_enabled_(grad_enabled),
#ifdef NDEBUG
      check_finite_(false)
#else
      check_finite_(true)
#endif
{
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  return record(std::move(value), {}, nullptr);
}

template <typename T>
Var<T> Tape<T>::input(Tensor<T> value, bool requires_grad) {
  Node node;
  node.own = std::move(value);
  node.requires_grad = requires_grad && grad_enabled_;
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::param(Parameter<T>& p) {
  if (auto it = param_ids_.find(&p); it != param_ids_.end()) return Var<T>(this, it->second);
  Node node;
  node.external = &p.value;
  node.param = &p;
  node.requires_grad = p.requires_grad && grad_enabled_;
  nodes_.push_back(std::move(node));
  param_ids_.emplace(&p, nodes_.size() - 1);
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, const std::vector<std::size_t>& parents, BackwardFn fn) {
  if (check_finite_ && !all_finite<T>(value.data)) {
    throw DivergenceError("non-finite value produced at tape node " + std::to_string(nodes_.size()));
  }
  Node node;
  node.own = std::move(value);
  if (grad_enabled_ && fn) {
    for (auto p : parents) node.requires_grad = node.requires_grad || nodes_[p].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
const Tensor<T>& Tape<T>::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.own;
}

template <typename T>
std::vector<T>& Tape<T>::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(value(id).data.size(), T{0});
  return n.grad;
}

template <typename T>
std::vector<Parameter<T>*> Tape<T>::backward(Var<T> loss) {
  if (loss.valid() && &loss.tape() != this) throw ContractViolation("backward: loss belongs to another tape");
  if (value(loss.id()).size() != 1) {
    throw ContractViolation("backward: loss must be a scalar, got shape " + shape_str(value(loss.id()).shape));
  }
  for (auto& n : nodes_) n.grad.clear();

  if (nodes_[loss.id()].requires_grad) {
    grad_buffer(loss.id())[0] = T{1};
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty() || !n.backward) continue;
      if (check_finite_ && !all_finite<T>(n.grad)) {
        throw DivergenceError("non-finite gradient at tape node " + std::to_string(i));
      }
      n.backward(*this, i);
    }
  }

  std::vector<Parameter<T>*> reached;
  for (auto& n : nodes_) {
    if (!n.param) continue;
    if (n.grad.empty()) {
      n.param->zero_grad();
    } else {
      n.param->grad = n.grad;
      reached.push_back(n.param);
    }
  }
  return reached;
}

template <typename T>
std::vector<T> Tape<T>::grad(Var<T> v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.empty()) return std::vector<T>(value(v.id()).data.size(), T{0});
  return n.grad;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace unnas
