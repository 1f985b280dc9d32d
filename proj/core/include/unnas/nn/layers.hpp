#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "unnas/autograd/ops.hpp"
#include "unnas/nn/cost.hpp"
#include "unnas/nn/op_kind.hpp"
#include "unnas/rng.hpp"

namespace unnas::nn {

/// Differentiable layer over NCHW batches. Shapes passed to `out_shape` and
/// `cost` are full NCHW shapes; costs are per image.
template <typename T>
class Module {
 public:
  virtual ~Module() = default;
  virtual Var<T> forward(Var<T> x, bool training) = 0;
  virtual void collect_parameters(std::vector<Parameter<T>*>& out) { (void)out; }
  [[nodiscard]] virtual Shape out_shape(const Shape& in) const = 0;
  [[nodiscard]] virtual CostStats cost(const Shape& in) const = 0;

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    collect_parameters(out);
    return out;
  }
};

template <typename T>
using ModulePtr = std::unique_ptr<Module<T>>;

template <typename T>
class Conv2d final : public Module<T> {
 public:
  Conv2d(std::int64_t cin, std::int64_t cout, int kernel, ops::ConvSpec spec, bool bias, Rng& rng);
  Var<T> forward(Var<T> x, bool training) override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  [[nodiscard]] Shape out_shape(const Shape& in) const override;
  [[nodiscard]] CostStats cost(const Shape& in) const override;

  Parameter<T>& weight() { return weight_; }
  std::optional<Parameter<T>>& bias() { return bias_; }

 private:
  std::int64_t cin_, cout_;
  int kernel_;
  ops::ConvSpec spec_;
  Parameter<T> weight_;
  std::optional<Parameter<T>> bias_;
};

template <typename T>
class BatchNorm2d final : public Module<T> {
 public:
  explicit BatchNorm2d(std::int64_t channels, bool affine = true);
  Var<T> forward(Var<T> x, bool training) override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  [[nodiscard]] Shape out_shape(const Shape& in) const override { return in; }
  [[nodiscard]] CostStats cost(const Shape&) const override { return batch_norm_cost(channels_, affine_); }
  ops::BatchNormState<T>& state() { return state_; }

 private:
  std::int64_t channels_;
  bool affine_;
  Parameter<T> gamma_, beta_;
  ops::BatchNormState<T> state_;
};

template <typename T>
class ReLU final : public Module<T> {
 public:
  Var<T> forward(Var<T> x, bool) override { return ops::relu(x); }
  [[nodiscard]] Shape out_shape(const Shape& in) const override { return in; }
  [[nodiscard]] CostStats cost(const Shape&) const override { return {}; }
};

enum class PoolKind { max, avg };

/// 3x3-style pooling with "same" padding.
template <typename T>
class Pool2d final : public Module<T> {
 public:
  Pool2d(PoolKind kind, int kernel, int stride, int padding) : kind_(kind), kernel_(kernel), stride_(stride), padding_(padding) {}
  Var<T> forward(Var<T> x, bool) override;
  [[nodiscard]] Shape out_shape(const Shape& in) const override;
  [[nodiscard]] CostStats cost(const Shape&) const override { return {}; }

 private:
  PoolKind kind_;
  int kernel_, stride_, padding_;
};

template <typename T>
class Identity final : public Module<T> {
 public:
  Var<T> forward(Var<T> x, bool) override { return x; }
  [[nodiscard]] Shape out_shape(const Shape& in) const override { return in; }
  [[nodiscard]] CostStats cost(const Shape&) const override { return {}; }
};

/// Emits zeros of the (possibly strided) output shape; gradient to the input is zero.
template <typename T>
class Zero final : public Module<T> {
 public:
  explicit Zero(int stride) : stride_(stride) {}
  Var<T> forward(Var<T> x, bool) override;
  [[nodiscard]] Shape out_shape(const Shape& in) const override;
  [[nodiscard]] CostStats cost(const Shape&) const override { return {}; }

 private:
  int stride_;
};

template <typename T>
class Sequential final : public Module<T> {
 public:
  Sequential() = default;
  explicit Sequential(std::vector<ModulePtr<T>> layers) : layers_(std::move(layers)) {}
  void push(ModulePtr<T> m) { layers_.push_back(std::move(m)); }
  Var<T> forward(Var<T> x, bool training) override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  [[nodiscard]] Shape out_shape(const Shape& in) const override;
  [[nodiscard]] CostStats cost(const Shape& in) const override;
  [[nodiscard]] std::size_t size() const { return layers_.size(); }

 private:
  std::vector<ModulePtr<T>> layers_;
};

/// ReLU, two parallel stride-2 1x1 convs (the second on a one-pixel shifted
/// input), channel concat, batch norm. Halves H and W.
template <typename T>
class FactorizedReduce final : public Module<T> {
 public:
  FactorizedReduce(std::int64_t cin, std::int64_t cout, Rng& rng, bool affine = true);
  Var<T> forward(Var<T> x, bool training) override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  [[nodiscard]] Shape out_shape(const Shape& in) const override;
  [[nodiscard]] CostStats cost(const Shape& in) const override;

 private:
  Conv2d<T> conv1_, conv2_;
  BatchNorm2d<T> bn_;
};

template <typename T>
class Linear final : public Module<T> {
 public:
  Linear(std::int64_t in, std::int64_t out, Rng& rng);
  Var<T> forward(Var<T> x, bool training) override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  [[nodiscard]] Shape out_shape(const Shape& in) const override { return {in.at(0), out_}; }
  [[nodiscard]] CostStats cost(const Shape&) const override { return linear_cost(in_, out_); }

 private:
  std::int64_t in_, out_;
  Parameter<T> weight_, bias_;
};

/// ReLU -> k x k conv -> BN.
template <typename T>
ModulePtr<T> relu_conv_bn(std::int64_t cin, std::int64_t cout, int kernel, int stride, int padding, Rng& rng,
                          bool affine = true);

/// Builds the layer for one candidate op. Stride must be 1 or 2.
template <typename T>
ModulePtr<T> instantiate_op(OpKind kind, std::int64_t channels, int stride, Rng& rng, bool affine = true);

extern template class Conv2d<float>;
extern template class Conv2d<double>;
extern template class BatchNorm2d<float>;
extern template class BatchNorm2d<double>;
extern template class Pool2d<float>;
extern template class Pool2d<double>;
extern template class Zero<float>;
extern template class Zero<double>;
extern template class Sequential<float>;
extern template class Sequential<double>;
extern template class FactorizedReduce<float>;
extern template class FactorizedReduce<double>;
extern template class Linear<float>;
extern template class Linear<double>;

}  // namespace unnas::nn
