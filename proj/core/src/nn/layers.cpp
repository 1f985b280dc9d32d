#include "unnas/nn/layers.hpp"

#include <cmath>

#include "unnas/error.hpp"

namespace unnas::nn {

namespace {

template <typename T>
Tensor<T> uniform_init(Shape shape, double bound, Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<T>(uniform_real(rng, -bound, bound));
  return t;
}

}  // namespace

template <typename T>
Conv2d<T>::Conv2d(std::int64_t cin, std::int64_t cout, int kernel, ops::ConvSpec spec, bool bias, Rng& rng)
    : cin_(cin), cout_(cout), kernel_(kernel), spec_(spec) {
  if (cin <= 0 || cout <= 0 || kernel <= 0) throw ContractViolation("Conv2d: non-positive size");
  if (cin % spec.groups || cout % spec.groups) throw ContractViolation("Conv2d: channels not divisible by groups");
  const std::int64_t fan_in = (cin / spec.groups) * kernel * kernel;
  weight_ = Parameter<T>("conv.weight", uniform_init<T>({cout, cin / spec.groups, kernel, kernel},
                                                        std::sqrt(6.0 / static_cast<double>(fan_in)), rng));
  if (bias) bias_.emplace("conv.bias", Tensor<T>({cout}));
}

template <typename T>
Var<T> Conv2d<T>::forward(Var<T> x, bool) {
  auto& tape = x.tape();
  std::optional<Var<T>> b;
  if (bias_) b = tape.param(*bias_);
  return ops::conv2d(x, tape.param(weight_), b, spec_);
}

template <typename T>
void Conv2d<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  out.push_back(&weight_);
  if (bias_) out.push_back(&*bias_);
}

template <typename T>
Shape Conv2d<T>::out_shape(const Shape& in) const {
  if (in.size() != 4 || in[1] != cin_) {
    throw ContractViolation("Conv2d: expected " + std::to_string(cin_) + " input channels, got shape " + shape_str(in));
  }
  return {in[0], cout_, ops::conv_out_extent(in[2], kernel_, spec_), ops::conv_out_extent(in[3], kernel_, spec_)};
}

template <typename T>
CostStats Conv2d<T>::cost(const Shape& in) const {
  const Shape o = out_shape(in);
  return conv_cost(cin_, cout_, kernel_, o[2], o[3], spec_.groups, bias_.has_value());
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::int64_t channels, bool affine)
    : channels_(channels),
      affine_(affine),
      gamma_("bn.gamma", Tensor<T>({channels}, T{1})),
      beta_("bn.beta", Tensor<T>({channels}, T{0})),
      state_(channels) {}

template <typename T>
Var<T> BatchNorm2d<T>::forward(Var<T> x, bool training) {
  if (!affine_) return ops::batch_norm<T>(x, std::nullopt, std::nullopt, state_, training);
  auto& tape = x.tape();
  return ops::batch_norm<T>(x, tape.param(gamma_), tape.param(beta_), state_, training);
}

template <typename T>
void BatchNorm2d<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  if (!affine_) return;
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

template <typename T>
Var<T> Pool2d<T>::forward(Var<T> x, bool) {
  return kind_ == PoolKind::max ? ops::max_pool2d(x, kernel_, stride_, padding_)
                                : ops::avg_pool2d(x, kernel_, stride_, padding_);
}

template <typename T>
Shape Pool2d<T>::out_shape(const Shape& in) const {
  const ops::ConvSpec s{stride_, padding_, 1, 1};
  return {in.at(0), in.at(1), ops::conv_out_extent(in.at(2), kernel_, s), ops::conv_out_extent(in.at(3), kernel_, s)};
}

template <typename T>
Var<T> Zero<T>::forward(Var<T> x, bool) {
  return x.tape().constant(Tensor<T>(out_shape(x.shape())));
}

template <typename T>
Shape Zero<T>::out_shape(const Shape& in) const {
  return {in.at(0), in.at(1), (in.at(2) + stride_ - 1) / stride_, (in.at(3) + stride_ - 1) / stride_};
}

template <typename T>
Var<T> Sequential<T>::forward(Var<T> x, bool training) {
  for (auto& l : layers_) x = l->forward(x, training);
  return x;
}

template <typename T>
void Sequential<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  for (auto& l : layers_) l->collect_parameters(out);
}

template <typename T>
Shape Sequential<T>::out_shape(const Shape& in) const {
  Shape s = in;
  for (const auto& l : layers_) s = l->out_shape(s);
  return s;
}

template <typename T>
CostStats Sequential<T>::cost(const Shape& in) const {
  CostStats c;
  Shape s = in;
  for (const auto& l : layers_) {
    c += l->cost(s);
    s = l->out_shape(s);
  }
  return c;
}

template <typename T>
FactorizedReduce<T>::FactorizedReduce(std::int64_t cin, std::int64_t cout, Rng& rng, bool affine)
    : conv1_(cin, cout / 2, 1, {2, 0, 1, 1}, false, rng),
      conv2_(cin, cout - cout / 2, 1, {2, 0, 1, 1}, false, rng),
      bn_(cout, affine) {
  if (cout < 2) throw ContractViolation("FactorizedReduce: needs at least 2 output channels");
}

template <typename T>
Var<T> FactorizedReduce<T>::forward(Var<T> x, bool training) {
  x = ops::relu(x);
  const std::array<Var<T>, 2> halves{conv1_.forward(x, training), conv2_.forward(ops::shift_crop(x), training)};
  return bn_.forward(ops::concat_channels<T>(halves), training);
}

template <typename T>
void FactorizedReduce<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  conv1_.collect_parameters(out);
  conv2_.collect_parameters(out);
  bn_.collect_parameters(out);
}

template <typename T>
Shape FactorizedReduce<T>::out_shape(const Shape& in) const {
  Shape a = conv1_.out_shape(in);
  a[1] += conv2_.out_shape(in)[1];
  return a;
}

template <typename T>
CostStats FactorizedReduce<T>::cost(const Shape& in) const {
  return conv1_.cost(in) + conv2_.cost(in) + bn_.cost(out_shape(in));
}

template <typename T>
Linear<T>::Linear(std::int64_t in, std::int64_t out, Rng& rng)
    : in_(in),
      out_(out),
      weight_("linear.weight", uniform_init<T>({out, in}, 1.0 / std::sqrt(static_cast<double>(in)), rng)),
      bias_("linear.bias", Tensor<T>({out})) {}

template <typename T>
Var<T> Linear<T>::forward(Var<T> x, bool) {
  auto& tape = x.tape();
  return ops::linear(x, tape.param(weight_), std::optional<Var<T>>(tape.param(bias_)));
}

template <typename T>
void Linear<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

template <typename T>
ModulePtr<T> relu_conv_bn(std::int64_t cin, std::int64_t cout, int kernel, int stride, int padding, Rng& rng,
                          bool affine) {
  auto seq = std::make_unique<Sequential<T>>();
  seq->push(std::make_unique<ReLU<T>>());
  seq->push(std::make_unique<Conv2d<T>>(cin, cout, kernel, ops::ConvSpec{stride, padding, 1, 1}, false, rng));
  seq->push(std::make_unique<BatchNorm2d<T>>(cout, affine));
  return seq;
}

namespace {

// ReLU -> depthwise k x k (stride, dilation) -> pointwise 1x1 -> BN.
template <typename T>
void push_dw_pw(Sequential<T>& seq, std::int64_t c, int k, int stride, int dilation, Rng& rng, bool affine) {
  const int pad = dilation * (k - 1) / 2;
  seq.push(std::make_unique<ReLU<T>>());
  seq.push(std::make_unique<Conv2d<T>>(c, c, k, ops::ConvSpec{stride, pad, dilation, static_cast<int>(c)}, false, rng));
  seq.push(std::make_unique<Conv2d<T>>(c, c, 1, ops::ConvSpec{}, false, rng));
  seq.push(std::make_unique<BatchNorm2d<T>>(c, affine));
}

}  // namespace

template <typename T>
ModulePtr<T> instantiate_op(OpKind kind, std::int64_t channels, int stride, Rng& rng, bool affine) {
  if (channels <= 0) throw ContractViolation("instantiate_op: channels must be positive");
  if (stride != 1 && stride != 2) throw ContractViolation("instantiate_op: stride must be 1 or 2");
  auto seq = std::make_unique<Sequential<T>>();
  switch (kind) {
    case OpKind::sep_conv_3x3:
    case OpKind::sep_conv_5x5: {
      const int k = kind == OpKind::sep_conv_3x3 ? 3 : 5;
      push_dw_pw(*seq, channels, k, stride, 1, rng, affine);
      push_dw_pw(*seq, channels, k, 1, 1, rng, affine);
      return seq;
    }
    case OpKind::dil_conv_3x3:
    case OpKind::dil_conv_5x5:
      push_dw_pw(*seq, channels, kind == OpKind::dil_conv_3x3 ? 3 : 5, stride, 2, rng, affine);
      return seq;
    case OpKind::max_pool_3x3: return std::make_unique<Pool2d<T>>(PoolKind::max, 3, stride, 1);
    case OpKind::avg_pool_3x3: return std::make_unique<Pool2d<T>>(PoolKind::avg, 3, stride, 1);
    case OpKind::skip_connect:
      if (stride == 1) return std::make_unique<Identity<T>>();
      return std::make_unique<FactorizedReduce<T>>(channels, channels, rng, affine);
    case OpKind::zero: return std::make_unique<Zero<T>>(stride);
  }
  throw ContractViolation("instantiate_op: unknown op kind " + std::to_string(static_cast<int>(kind)));
}

template class Conv2d<float>;
template class Conv2d<double>;
template class BatchNorm2d<float>;
template class BatchNorm2d<double>;
template class Pool2d<float>;
template class Pool2d<double>;
template class Zero<float>;
template class Zero<double>;
template class Sequential<float>;
template class Sequential<double>;
template class FactorizedReduce<float>;
template class FactorizedReduce<double>;
template class Linear<float>;
template class Linear<double>;

template ModulePtr<float> relu_conv_bn<float>(std::int64_t, std::int64_t, int, int, int, Rng&, bool);
template ModulePtr<double> relu_conv_bn<double>(std::int64_t, std::int64_t, int, int, int, Rng&, bool);
template ModulePtr<float> instantiate_op<float>(OpKind, std::int64_t, int, Rng&, bool);
template ModulePtr<double> instantiate_op<double>(OpKind, std::int64_t, int, Rng&, bool);

}  // namespace unnas::nn
