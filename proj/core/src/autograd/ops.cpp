#include "unnas/autograd/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "unnas/error.hpp"

namespace unnas::ops {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

using I64 = std::int64_t;

void require(bool ok, const std::string& msg) {
  if (!ok) throw ContractViolation(msg);
}

template <typename T>
void require_same_tape(Var<T> a, Var<T> b, const char* op) {
  require(&a.tape() == &b.tape(), std::string(op) + ": operands live on different tapes");
}

void require_rank4(const Shape& s, const char* op) {
  require(s.size() == 4, std::string(op) + ": expected (N, C, H, W), got " + shape_str(s));
}

template <typename T>
void accumulate(std::vector<T>& dst, const std::vector<T>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// Rows are (c, kh, kw), columns are (oh, ow).
template <typename T>
void im2col(const T* x, I64 channels, I64 h, I64 w, int k, const ConvSpec& s, I64 ho, I64 wo, T* col) {
  for (I64 c = 0; c < channels; ++c) {
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw) {
        T* row = col + ((c * k + kh) * k + kw) * ho * wo;
        for (I64 oh = 0; oh < ho; ++oh) {
          const I64 ih = oh * s.stride - s.padding + kh * s.dilation;
          T* out = row + oh * wo;
          if (ih < 0 || ih >= h) {
            std::fill(out, out + wo, T{0});
            continue;
          }
          const T* in = x + (c * h + ih) * w;
          for (I64 ow = 0; ow < wo; ++ow) {
            const I64 iw = ow * s.stride - s.padding + kw * s.dilation;
            out[ow] = (iw >= 0 && iw < w) ? in[iw] : T{0};
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, I64 channels, I64 h, I64 w, int k, const ConvSpec& s, I64 ho, I64 wo, T* x) {
  for (I64 c = 0; c < channels; ++c) {
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw) {
        const T* row = col + ((c * k + kh) * k + kw) * ho * wo;
        for (I64 oh = 0; oh < ho; ++oh) {
          const I64 ih = oh * s.stride - s.padding + kh * s.dilation;
          if (ih < 0 || ih >= h) continue;
          T* in = x + (c * h + ih) * w;
          const T* g = row + oh * wo;
          for (I64 ow = 0; ow < wo; ++ow) {
            const I64 iw = ow * s.stride - s.padding + kw * s.dilation;
            if (iw >= 0 && iw < w) in[iw] += g[ow];
          }
        }
      }
    }
  }
}

// Valid output range [lo, hi) along one axis for kernel tap `tap`.
inline void tap_range(I64 in, I64 out, int tap, const ConvSpec& s, I64& lo, I64& hi) {
  const I64 off = static_cast<I64>(tap) * s.dilation - s.padding;
  // need 0 <= o*stride + off < in
  lo = off >= 0 ? 0 : (-off + s.stride - 1) / s.stride;
  hi = in - off <= 0 ? 0 : (in - off - 1) / s.stride + 1;
  hi = std::min(hi, out);
  lo = std::min(lo, hi);
}

struct ConvGeom {
  I64 n, cin, h, w, cout, ho, wo;
  int k;
};

template <typename T>
void conv_forward_grouped(const T* x, const T* wt, T* y, const ConvGeom& g, const ConvSpec& s) {
  const I64 cg_in = g.cin / s.groups;
  const I64 cg_out = g.cout / s.groups;
  for (I64 n = 0; n < g.n; ++n) {
    for (I64 oc = 0; oc < g.cout; ++oc) {
      const I64 grp = oc / cg_out;
      T* out = y + (n * g.cout + oc) * g.ho * g.wo;
      for (I64 icl = 0; icl < cg_in; ++icl) {
        const I64 ic = grp * cg_in + icl;
        const T* in = x + (n * g.cin + ic) * g.h * g.w;
        for (int kh = 0; kh < g.k; ++kh) {
          I64 oh_lo, oh_hi;
          tap_range(g.h, g.ho, kh, s, oh_lo, oh_hi);
          for (int kw = 0; kw < g.k; ++kw) {
            I64 ow_lo, ow_hi;
            tap_range(g.w, g.wo, kw, s, ow_lo, ow_hi);
            const T wv = wt[((oc * cg_in + icl) * g.k + kh) * g.k + kw];
            for (I64 oh = oh_lo; oh < oh_hi; ++oh) {
              const T* row = in + (oh * s.stride - s.padding + kh * s.dilation) * g.w;
              T* orow = out + oh * g.wo;
              const I64 base = kw * s.dilation - s.padding;
              for (I64 ow = ow_lo; ow < ow_hi; ++ow) orow[ow] += wv * row[ow * s.stride + base];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv_backward_grouped(const T* x, const T* wt, const T* dy, T* dx, T* dw, const ConvGeom& g,
                           const ConvSpec& s) {
  const I64 cg_in = g.cin / s.groups;
  const I64 cg_out = g.cout / s.groups;
  for (I64 n = 0; n < g.n; ++n) {
    for (I64 oc = 0; oc < g.cout; ++oc) {
      const I64 grp = oc / cg_out;
      const T* gout = dy + (n * g.cout + oc) * g.ho * g.wo;
      for (I64 icl = 0; icl < cg_in; ++icl) {
        const I64 ic = grp * cg_in + icl;
        const T* in = x + (n * g.cin + ic) * g.h * g.w;
        T* gin = dx ? dx + (n * g.cin + ic) * g.h * g.w : nullptr;
        for (int kh = 0; kh < g.k; ++kh) {
          I64 oh_lo, oh_hi;
          tap_range(g.h, g.ho, kh, s, oh_lo, oh_hi);
          for (int kw = 0; kw < g.k; ++kw) {
            I64 ow_lo, ow_hi;
            tap_range(g.w, g.wo, kw, s, ow_lo, ow_hi);
            const I64 widx = ((oc * cg_in + icl) * g.k + kh) * g.k + kw;
            const T wv = wt[widx];
            const I64 base = kw * s.dilation - s.padding;
            T acc{0};
            for (I64 oh = oh_lo; oh < oh_hi; ++oh) {
              const I64 ih = oh * s.stride - s.padding + kh * s.dilation;
              const T* row = in + ih * g.w;
              const T* grow = gout + oh * g.wo;
              if (gin) {
                T* girow = gin + ih * g.w;
                for (I64 ow = ow_lo; ow < ow_hi; ++ow) {
                  acc += grow[ow] * row[ow * s.stride + base];
                  girow[ow * s.stride + base] += wv * grow[ow];
                }
              } else {
                for (I64 ow = ow_lo; ow < ow_hi; ++ow) acc += grow[ow] * row[ow * s.stride + base];
              }
            }
            if (dw) dw[widx] += acc;
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_tape(a, b, "add");
  require(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out = a.value();
  const auto& bv = b.value().data;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    if (t.requires_grad(ia)) accumulate(t.grad_buffer(ia), g);
    if (t.requires_grad(ib)) accumulate(t.grad_buffer(ib), g);
  });
}

template <typename T>
Var<T> add_n(std::span<const Var<T>> xs) {
  require(!xs.empty(), "add_n: no operands");
  Tensor<T> out = xs[0].value();
  std::vector<std::size_t> ids{xs[0].id()};
  for (std::size_t k = 1; k < xs.size(); ++k) {
    require_same_tape(xs[0], xs[k], "add_n");
    require(xs[k].shape() == out.shape, "add_n: shape mismatch " + shape_str(out.shape) + " vs " +
                                            shape_str(xs[k].shape()));
    const auto& v = xs[k].value().data;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += v[i];
    ids.push_back(xs[k].id());
  }
  return xs[0].tape().record(std::move(out), ids, [ids](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    for (auto id : ids) {
      if (t.requires_grad(id)) accumulate(t.grad_buffer(id), g);
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_tape(a, b, "mul");
  require(a.shape() == b.shape(), "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out = a.value();
  const auto& bv = b.value().data;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const auto& av = t.value(ia).data;
    const auto& bv = t.value(ib).data;
    if (t.requires_grad(ia)) {
      auto& ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(ib)) {
      auto& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> x, T c) {
  Tensor<T> out = x.value();
  for (auto& v : out.data) v *= c;
  const auto ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix, c](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    auto& gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += c * g[i];
  });
}

template <typename T>
Var<T> scale_by(Var<T> x, Var<T> weights, std::int64_t index) {
  require_same_tape(x, weights, "scale_by");
  require(index >= 0 && index < weights.value().size(), "scale_by: index out of range");
  const T w = weights.value()[index];
  Tensor<T> out = x.value();
  for (auto& v : out.data) v *= w;
  const auto ix = x.id(), iw = weights.id();
  return x.tape().record(std::move(out), {ix, iw}, [ix, iw, index](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    if (t.requires_grad(ix)) {
      const T wv = t.value(iw)[index];
      auto& gx = t.grad_buffer(ix);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += wv * g[i];
    }
    if (t.requires_grad(iw)) {
      const auto& xv = t.value(ix).data;
      T acc{0};
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * xv[i];
      t.grad_buffer(iw)[static_cast<std::size_t>(index)] += acc;
    }
  });
}

template <typename T>
Var<T> sum(Var<T> x) {
  T acc{0};
  for (T v : x.value().data) acc += v;
  const auto ix = x.id();
  return x.tape().record(Tensor<T>({1}, {acc}), {ix}, [ix](Tape<T>& t, std::size_t self) {
    const T g = t.grad_of(self)[0];
    for (auto& v : t.grad_buffer(ix)) v += g;
  });
}

template <typename T>
Var<T> mean(Var<T> x) {
  return scale(sum(x), T{1} / static_cast<T>(x.value().size()));
}

template <typename T>
Var<T> relu(Var<T> x) {
  Tensor<T> out = x.value();
  for (auto& v : out.data) v = v > T{0} ? v : T{0};
  const auto ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const auto& xv = t.value(ix).data;
    auto& gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > T{0}) gx[i] += g[i];
    }
  });
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, std::optional<Var<T>> bias, const ConvSpec& spec) {
  require_same_tape(x, weight, "conv2d");
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  require_rank4(xs, "conv2d");
  require(ws.size() == 4 && ws[2] == ws[3], "conv2d: weight must be (Cout, Cin/groups, k, k), got " + shape_str(ws));
  require(spec.stride >= 1 && spec.dilation >= 1 && spec.groups >= 1 && spec.padding >= 0, "conv2d: bad spec");
  ConvGeom g{xs[0], xs[1], xs[2], xs[3], ws[0], 0, 0, static_cast<int>(ws[2])};
  require(g.cin % spec.groups == 0 && g.cout % spec.groups == 0, "conv2d: channels not divisible by groups");
  require(ws[1] * spec.groups == g.cin,
          "conv2d: weight expects " + std::to_string(ws[1] * spec.groups) + " input channels, got " +
              std::to_string(g.cin));
  g.ho = conv_out_extent(g.h, g.k, spec);
  g.wo = conv_out_extent(g.w, g.k, spec);
  require(g.ho > 0 && g.wo > 0, "conv2d: empty output for input " + shape_str(xs));
  if (bias) {
    require_same_tape(x, *bias, "conv2d");
    require(bias->shape() == Shape{g.cout}, "conv2d: bias must be (Cout)");
  }

  Tensor<T> out({g.n, g.cout, g.ho, g.wo});
  const T* xv = x.value().data.data();
  const T* wv = weight.value().data.data();
  const bool direct = spec.groups == 1 && g.k == 1 && spec.stride == 1 && spec.padding == 0;
  const I64 krows = g.cin * g.k * g.k;
  const I64 plane = g.ho * g.wo;

  if (spec.groups == 1) {
    std::vector<T> col(direct ? 0 : static_cast<std::size_t>(krows * plane));
    ConstMatMap<T> wmat(wv, g.cout, krows);
    for (I64 n = 0; n < g.n; ++n) {
      const T* xn = xv + n * g.cin * g.h * g.w;
      if (!direct) im2col(xn, g.cin, g.h, g.w, g.k, spec, g.ho, g.wo, col.data());
      ConstMatMap<T> cmat(direct ? xn : col.data(), krows, plane);
      MatMap<T> omat(out.data.data() + n * g.cout * plane, g.cout, plane);
      omat.noalias() = wmat * cmat;
    }
  } else {
    conv_forward_grouped(xv, wv, out.data.data(), g, spec);
  }
  if (bias) {
    const auto& bv = bias->value().data;
    for (I64 n = 0; n < g.n; ++n)
      for (I64 c = 0; c < g.cout; ++c) {
        T* p = out.data.data() + (n * g.cout + c) * plane;
        for (I64 i = 0; i < plane; ++i) p[i] += bv[static_cast<std::size_t>(c)];
      }
  }

  const auto ix = x.id(), iw = weight.id();
  std::vector<std::size_t> parents{ix, iw};
  std::optional<std::size_t> ib;
  if (bias) {
    ib = bias->id();
    parents.push_back(*ib);
  }
  return x.tape().record(std::move(out), parents, [ix, iw, ib, g, spec, direct, krows, plane](Tape<T>& t,
                                                                                              std::size_t self) {
    const auto& dy = t.grad_of(self);
    const T* xv = t.value(ix).data.data();
    const T* wv = t.value(iw).data.data();
    T* dx = t.requires_grad(ix) ? t.grad_buffer(ix).data() : nullptr;
    T* dw = t.requires_grad(iw) ? t.grad_buffer(iw).data() : nullptr;
    if (ib && t.requires_grad(*ib)) {
      auto& db = t.grad_buffer(*ib);
      for (I64 n = 0; n < g.n; ++n)
        for (I64 c = 0; c < g.cout; ++c) {
          const T* p = dy.data() + (n * g.cout + c) * plane;
          T acc{0};
          for (I64 i = 0; i < plane; ++i) acc += p[i];
          db[static_cast<std::size_t>(c)] += acc;
        }
    }
    if (!dx && !dw) return;
    if (spec.groups != 1) {
      conv_backward_grouped(xv, wv, dy.data(), dx, dw, g, spec);
      return;
    }
    std::vector<T> col(direct ? 0 : static_cast<std::size_t>(krows * plane));
    std::vector<T> dcol(direct || !dx ? 0 : static_cast<std::size_t>(krows * plane));
    ConstMatMap<T> wmat(wv, g.cout, krows);
    for (I64 n = 0; n < g.n; ++n) {
      const T* xn = xv + n * g.cin * g.h * g.w;
      ConstMatMap<T> dymat(dy.data() + n * g.cout * plane, g.cout, plane);
      if (dw) {
        if (!direct) im2col(xn, g.cin, g.h, g.w, g.k, spec, g.ho, g.wo, col.data());
        ConstMatMap<T> cmat(direct ? xn : col.data(), krows, plane);
        MatMap<T> dwmat(dw, g.cout, krows);
        dwmat.noalias() += dymat * cmat.transpose();
      }
      if (dx) {
        T* dxn = dx + n * g.cin * g.h * g.w;
        if (direct) {
          MatMap<T> dxmat(dxn, krows, plane);
          dxmat.noalias() += wmat.transpose() * dymat;
        } else {
          MatMap<T> dcmat(dcol.data(), krows, plane);
          dcmat.noalias() = wmat.transpose() * dymat;
          col2im(dcol.data(), g.cin, g.h, g.w, g.k, spec, g.ho, g.wo, dxn);
        }
      }
    }
  });
}

template <typename T>
Var<T> batch_norm(Var<T> x, std::optional<Var<T>> gamma, std::optional<Var<T>> beta, BatchNormState<T>& state,
                  bool training) {
  const Shape& xs = x.shape();
  require_rank4(xs, "batch_norm");
  const I64 n = xs[0], c = xs[1], plane = xs[2] * xs[3];
  require(static_cast<I64>(state.running_mean.size()) == c, "batch_norm: state has wrong channel count");
  if (gamma) require(gamma->shape() == Shape{c}, "batch_norm: gamma must be (C)");
  if (beta) require(beta->shape() == Shape{c}, "batch_norm: beta must be (C)");
  const I64 m = n * plane;

  auto xhat = std::make_shared<std::vector<T>>(x.value().data.size());
  auto invstd = std::make_shared<std::vector<T>>(static_cast<std::size_t>(c));
  const auto& xv = x.value().data;
  for (I64 ch = 0; ch < c; ++ch) {
    T mu, var;
    if (training) {
      double s = 0, s2 = 0;
      for (I64 i = 0; i < n; ++i) {
        const T* p = xv.data() + (i * c + ch) * plane;
        for (I64 j = 0; j < plane; ++j) s += p[j];
      }
      const double md = s / static_cast<double>(m);
      for (I64 i = 0; i < n; ++i) {
        const T* p = xv.data() + (i * c + ch) * plane;
        for (I64 j = 0; j < plane; ++j) s2 += (p[j] - md) * (p[j] - md);
      }
      mu = static_cast<T>(md);
      var = static_cast<T>(s2 / static_cast<double>(m));
      const auto idx = static_cast<std::size_t>(ch);
      const T unbiased = m > 1 ? static_cast<T>(s2 / static_cast<double>(m - 1)) : var;
      state.running_mean[idx] = (T{1} - state.momentum) * state.running_mean[idx] + state.momentum * mu;
      state.running_var[idx] = (T{1} - state.momentum) * state.running_var[idx] + state.momentum * unbiased;
    } else {
      mu = state.running_mean[static_cast<std::size_t>(ch)];
      var = state.running_var[static_cast<std::size_t>(ch)];
    }
    const T is = T{1} / std::sqrt(var + state.eps);
    (*invstd)[static_cast<std::size_t>(ch)] = is;
    for (I64 i = 0; i < n; ++i) {
      const I64 off = (i * c + ch) * plane;
      for (I64 j = 0; j < plane; ++j) (*xhat)[off + j] = (xv[off + j] - mu) * is;
    }
  }

  Tensor<T> out(xs);
  for (I64 ch = 0; ch < c; ++ch) {
    const T gm = gamma ? gamma->value()[ch] : T{1};
    const T bt = beta ? beta->value()[ch] : T{0};
    for (I64 i = 0; i < n; ++i) {
      const I64 off = (i * c + ch) * plane;
      for (I64 j = 0; j < plane; ++j) out.data[off + j] = gm * (*xhat)[off + j] + bt;
    }
  }

  const auto ix = x.id();
  std::vector<std::size_t> parents{ix};
  std::optional<std::size_t> ig, ibt;
  if (gamma) parents.push_back(*(ig = gamma->id()));
  if (beta) parents.push_back(*(ibt = beta->id()));
  return x.tape().record(std::move(out), parents,
                         [ix, ig, ibt, xhat, invstd, n, c, plane, m, training](Tape<T>& t, std::size_t self) {
    const auto& dy = t.grad_of(self);
    T* dx = t.requires_grad(ix) ? t.grad_buffer(ix).data() : nullptr;
    T* dg = ig && t.requires_grad(*ig) ? t.grad_buffer(*ig).data() : nullptr;
    T* db = ibt && t.requires_grad(*ibt) ? t.grad_buffer(*ibt).data() : nullptr;
    const auto& xh = *xhat;
    for (I64 ch = 0; ch < c; ++ch) {
      T sdy{0}, sdyx{0};
      for (I64 i = 0; i < n; ++i) {
        const I64 off = (i * c + ch) * plane;
        for (I64 j = 0; j < plane; ++j) {
          sdy += dy[off + j];
          sdyx += dy[off + j] * xh[off + j];
        }
      }
      if (dg) dg[ch] += sdyx;
      if (db) db[ch] += sdy;
      if (!dx) continue;
      const T gm = ig ? t.value(*ig)[ch] : T{1};
      const T is = (*invstd)[static_cast<std::size_t>(ch)];
      if (training) {
        const T k = gm * is / static_cast<T>(m);
        const T md = static_cast<T>(m);
        for (I64 i = 0; i < n; ++i) {
          const I64 off = (i * c + ch) * plane;
          for (I64 j = 0; j < plane; ++j) dx[off + j] += k * (md * dy[off + j] - sdy - xh[off + j] * sdyx);
        }
      } else {
        for (I64 i = 0; i < n; ++i) {
          const I64 off = (i * c + ch) * plane;
          for (I64 j = 0; j < plane; ++j) dx[off + j] += gm * is * dy[off + j];
        }
      }
    }
  });
}

template <typename T>
Var<T> max_pool2d(Var<T> x, int kernel, int stride, int padding) {
  const Shape& xs = x.shape();
  require_rank4(xs, "max_pool2d");
  require(kernel >= 1 && stride >= 1 && padding >= 0 && padding < kernel, "max_pool2d: bad geometry");
  const ConvSpec s{stride, padding, 1, 1};
  const I64 n = xs[0], c = xs[1], h = xs[2], w = xs[3];
  const I64 ho = conv_out_extent(h, kernel, s), wo = conv_out_extent(w, kernel, s);
  require(ho > 0 && wo > 0, "max_pool2d: empty output");
  Tensor<T> out({n, c, ho, wo});
  auto argmax = std::make_shared<std::vector<std::int32_t>>(out.data.size());
  const auto& xv = x.value().data;
  for (I64 p = 0; p < n * c; ++p) {
    const T* in = xv.data() + p * h * w;
    for (I64 oh = 0; oh < ho; ++oh)
      for (I64 ow = 0; ow < wo; ++ow) {
        T best = -std::numeric_limits<T>::infinity();
        std::int32_t arg = -1;
        for (int kh = 0; kh < kernel; ++kh) {
          const I64 ih = oh * stride - padding + kh;
          if (ih < 0 || ih >= h) continue;
          for (int kw = 0; kw < kernel; ++kw) {
            const I64 iw = ow * stride - padding + kw;
            if (iw < 0 || iw >= w) continue;
            if (arg < 0 || in[ih * w + iw] > best) {
              best = in[ih * w + iw];
              arg = static_cast<std::int32_t>(ih * w + iw);
            }
          }
        }
        const I64 o = (p * ho + oh) * wo + ow;
        out.data[o] = best;
        (*argmax)[o] = arg;
      }
  }
  const auto ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix, argmax, h, w, ho, wo](Tape<T>& t, std::size_t self) {
    const auto& dy = t.grad_of(self);
    auto& dx = t.grad_buffer(ix);
    const I64 oplane = ho * wo;
    for (std::size_t o = 0; o < dy.size(); ++o) {
      const I64 p = static_cast<I64>(o) / oplane;
      dx[p * h * w + (*argmax)[o]] += dy[o];
    }
  });
}

template <typename T>
Var<T> avg_pool2d(Var<T> x, int kernel, int stride, int padding) {
  const Shape& xs = x.shape();
  require_rank4(xs, "avg_pool2d");
  require(kernel >= 1 && stride >= 1 && padding >= 0 && padding < kernel, "avg_pool2d: bad geometry");
  const ConvSpec s{stride, padding, 1, 1};
  const I64 n = xs[0], c = xs[1], h = xs[2], w = xs[3];
  const I64 ho = conv_out_extent(h, kernel, s), wo = conv_out_extent(w, kernel, s);
  require(ho > 0 && wo > 0, "avg_pool2d: empty output");
  Tensor<T> out({n, c, ho, wo});
  const auto& xv = x.value().data;
  auto window = [=](I64 o, I64 extent, I64& lo, I64& hi) {
    lo = std::max<I64>(0, o * stride - padding);
    hi = std::min<I64>(extent, o * stride - padding + kernel);
  };
  for (I64 p = 0; p < n * c; ++p) {
    const T* in = xv.data() + p * h * w;
    for (I64 oh = 0; oh < ho; ++oh) {
      I64 h0, h1;
      window(oh, h, h0, h1);
      for (I64 ow = 0; ow < wo; ++ow) {
        I64 w0, w1;
        window(ow, w, w0, w1);
        T acc{0};
        for (I64 ih = h0; ih < h1; ++ih)
          for (I64 iw = w0; iw < w1; ++iw) acc += in[ih * w + iw];
        out.data[(p * ho + oh) * wo + ow] = acc / static_cast<T>((h1 - h0) * (w1 - w0));
      }
    }
  }
  const auto ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix, n, c, h, w, ho, wo, window](Tape<T>& t, std::size_t self) {
    const auto& dy = t.grad_of(self);
    auto& dx = t.grad_buffer(ix);
    for (I64 p = 0; p < n * c; ++p) {
      T* gin = dx.data() + p * h * w;
      for (I64 oh = 0; oh < ho; ++oh) {
        I64 h0, h1;
        window(oh, h, h0, h1);
        for (I64 ow = 0; ow < wo; ++ow) {
          I64 w0, w1;
          window(ow, w, w0, w1);
          const T g = dy[(p * ho + oh) * wo + ow] / static_cast<T>((h1 - h0) * (w1 - w0));
          for (I64 ih = h0; ih < h1; ++ih)
            for (I64 iw = w0; iw < w1; ++iw) gin[ih * w + iw] += g;
        }
      }
    }
  });
}

template <typename T>
Var<T> global_avg_pool(Var<T> x) {
  const Shape& xs = x.shape();
  require_rank4(xs, "global_avg_pool");
  const I64 nc = xs[0] * xs[1], plane = xs[2] * xs[3];
  Tensor<T> out({xs[0], xs[1]});
  const auto& xv = x.value().data;
  for (I64 p = 0; p < nc; ++p) {
    T acc{0};
    for (I64 j = 0; j < plane; ++j) acc += xv[p * plane + j];
    out.data[p] = acc / static_cast<T>(plane);
  }
  const auto ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix, nc, plane](Tape<T>& t, std::size_t self) {
    const auto& dy = t.grad_of(self);
    auto& dx = t.grad_buffer(ix);
    for (I64 p = 0; p < nc; ++p) {
      const T g = dy[p] / static_cast<T>(plane);
      for (I64 j = 0; j < plane; ++j) dx[p * plane + j] += g;
    }
  });
}

template <typename T>
Var<T> upsample_nearest(Var<T> x, int factor) {
  const Shape& xs = x.shape();
  require_rank4(xs, "upsample_nearest");
  require(factor >= 1, "upsample_nearest: factor must be >= 1");
  if (factor == 1) return x;
  const I64 nc = xs[0] * xs[1], h = xs[2], w = xs[3], ho = h * factor, wo = w * factor;
  Tensor<T> out({xs[0], xs[1], ho, wo});
  const auto& xv = x.value().data;
  for (I64 p = 0; p < nc; ++p)
    for (I64 oh = 0; oh < ho; ++oh)
      for (I64 ow = 0; ow < wo; ++ow) out.data[(p * ho + oh) * wo + ow] = xv[(p * h + oh / factor) * w + ow / factor];
  const auto ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix, nc, h, w, ho, wo, factor](Tape<T>& t, std::size_t self) {
    const auto& dy = t.grad_of(self);
    auto& dx = t.grad_buffer(ix);
    for (I64 p = 0; p < nc; ++p)
      for (I64 oh = 0; oh < ho; ++oh)
        for (I64 ow = 0; ow < wo; ++ow) dx[(p * h + oh / factor) * w + ow / factor] += dy[(p * ho + oh) * wo + ow];
  });
}

template <typename T>
Var<T> shift_crop(Var<T> x) {
  const Shape& xs = x.shape();
  require_rank4(xs, "shift_crop");
  const I64 nc = xs[0] * xs[1], h = xs[2], w = xs[3];
  Tensor<T> out(xs);
  const auto& xv = x.value().data;
  for (I64 p = 0; p < nc; ++p)
    for (I64 i = 0; i + 1 < h; ++i)
      for (I64 j = 0; j + 1 < w; ++j) out.data[(p * h + i) * w + j] = xv[(p * h + i + 1) * w + j + 1];
  const auto ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix, nc, h, w](Tape<T>& t, std::size_t self) {
    const auto& dy = t.grad_of(self);
    auto& dx = t.grad_buffer(ix);
    for (I64 p = 0; p < nc; ++p)
      for (I64 i = 0; i + 1 < h; ++i)
        for (I64 j = 0; j + 1 < w; ++j) dx[(p * h + i + 1) * w + j + 1] += dy[(p * h + i) * w + j];
  });
}

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> xs) {
  require(!xs.empty(), "concat_channels: no operands");
  const Shape& s0 = xs[0].shape();
  require_rank4(s0, "concat_channels");
  I64 ctot = 0;
  std::vector<I64> chans;
  std::vector<std::size_t> ids;
  for (const auto& v : xs) {
    require_same_tape(xs[0], v, "concat_channels");
    const Shape& s = v.shape();
    require(s.size() == 4 && s[0] == s0[0] && s[2] == s0[2] && s[3] == s0[3],
            "concat_channels: incompatible shapes " + shape_str(s0) + " and " + shape_str(s));
    chans.push_back(s[1]);
    ctot += s[1];
    ids.push_back(v.id());
  }
  const I64 n = s0[0], plane = s0[2] * s0[3];
  Tensor<T> out({n, ctot, s0[2], s0[3]});
  I64 coff = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const auto& v = xs[k].value().data;
    for (I64 i = 0; i < n; ++i)
      std::copy_n(v.data() + i * chans[k] * plane, chans[k] * plane, out.data.data() + (i * ctot + coff) * plane);
    coff += chans[k];
  }
  return xs[0].tape().record(std::move(out), ids, [ids, chans, n, ctot, plane](Tape<T>& t, std::size_t self) {
    const auto& dy = t.grad_of(self);
    I64 coff = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.requires_grad(ids[k])) {
        auto& dx = t.grad_buffer(ids[k]);
        for (I64 i = 0; i < n; ++i) {
          const T* src = dy.data() + (i * ctot + coff) * plane;
          T* dst = dx.data() + i * chans[k] * plane;
          for (I64 j = 0; j < chans[k] * plane; ++j) dst[j] += src[j];
        }
      }
      coff += chans[k];
    }
  });
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> weight, std::optional<Var<T>> bias) {
  require_same_tape(x, weight, "linear");
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  require(xs.size() == 2 && ws.size() == 2 && xs[1] == ws[1],
          "linear: incompatible shapes " + shape_str(xs) + " and " + shape_str(ws));
  const I64 n = xs[0], f = xs[1], o = ws[0];
  if (bias) require(bias->shape() == Shape{o}, "linear: bias must be (O)");
  Tensor<T> out({n, o});
  ConstMatMap<T> xm(x.value().data.data(), n, f);
  ConstMatMap<T> wm(weight.value().data.data(), o, f);
  MatMap<T> ym(out.data.data(), n, o);
  ym.noalias() = xm * wm.transpose();
  if (bias) {
    const auto& bv = bias->value().data;
    for (I64 i = 0; i < n; ++i)
      for (I64 j = 0; j < o; ++j) out.data[i * o + j] += bv[j];
  }
  const auto ix = x.id(), iw = weight.id();
  std::vector<std::size_t> parents{ix, iw};
  std::optional<std::size_t> ib;
  if (bias) parents.push_back(*(ib = bias->id()));
  return x.tape().record(std::move(out), parents, [ix, iw, ib, n, f, o](Tape<T>& t, std::size_t self) {
    const auto& dy = t.grad_of(self);
    ConstMatMap<T> dym(dy.data(), n, o);
    if (t.requires_grad(ix)) {
      MatMap<T> dxm(t.grad_buffer(ix).data(), n, f);
      dxm.noalias() += dym * ConstMatMap<T>(t.value(iw).data.data(), o, f);
    }
    if (t.requires_grad(iw)) {
      MatMap<T> dwm(t.grad_buffer(iw).data(), o, f);
      dwm.noalias() += dym.transpose() * ConstMatMap<T>(t.value(ix).data.data(), n, f);
    }
    if (ib && t.requires_grad(*ib)) {
      auto& db = t.grad_buffer(*ib);
      for (I64 i = 0; i < n; ++i)
        for (I64 j = 0; j < o; ++j) db[j] += dy[i * o + j];
    }
  });
}

template <typename T>
Var<T> softmax_rows(Var<T> x) {
  const Shape& xs = x.shape();
  require(xs.size() == 2, "softmax_rows: expected a 2-D tensor, got " + shape_str(xs));
  const I64 r = xs[0], k = xs[1];
  Tensor<T> out(xs);
  const auto& xv = x.value().data;
  for (I64 i = 0; i < r; ++i) {
    const T* row = xv.data() + i * k;
    const T mx = *std::max_element(row, row + k);
    T z{0};
    for (I64 j = 0; j < k; ++j) z += (out.data[i * k + j] = std::exp(row[j] - mx));
    for (I64 j = 0; j < k; ++j) out.data[i * k + j] /= z;
  }
  const auto ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix, r, k](Tape<T>& t, std::size_t self) {
    const auto& dy = t.grad_of(self);
    const auto& y = t.value(self).data;
    auto& dx = t.grad_buffer(ix);
    for (I64 i = 0; i < r; ++i) {
      T dot{0};
      for (I64 j = 0; j < k; ++j) dot += dy[i * k + j] * y[i * k + j];
      for (I64 j = 0; j < k; ++j) dx[i * k + j] += y[i * k + j] * (dy[i * k + j] - dot);
    }
  });
}

template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, std::span<const std::int32_t> targets) {
  const Shape& ls = logits.shape();
  require(ls.size() == 2 || ls.size() == 4, "softmax_cross_entropy: logits must be (N, K) or (N, K, H, W)");
  const I64 n = ls[0], k = ls[1], plane = ls.size() == 4 ? ls[2] * ls[3] : 1;
  require(static_cast<I64>(targets.size()) == n * plane,
          "softmax_cross_entropy: expected " + std::to_string(n * plane) + " targets, got " +
              std::to_string(targets.size()));
  const auto& lv = logits.value().data;
  auto probs = std::make_shared<std::vector<T>>(lv.size());
  double loss = 0;
  for (I64 i = 0; i < n; ++i)
    for (I64 s = 0; s < plane; ++s) {
      const std::int32_t y = targets[static_cast<std::size_t>(i * plane + s)];
      require(y >= 0 && y < k, "softmax_cross_entropy: target " + std::to_string(y) + " out of range");
      const I64 base = i * k * plane + s;
      T mx = lv[base];
      for (I64 j = 1; j < k; ++j) mx = std::max(mx, lv[base + j * plane]);
      T z{0};
      for (I64 j = 0; j < k; ++j) z += ((*probs)[base + j * plane] = std::exp(lv[base + j * plane] - mx));
      for (I64 j = 0; j < k; ++j) (*probs)[base + j * plane] /= z;
      loss -= static_cast<double>(lv[base + y * plane] - mx - std::log(z));
    }
  const I64 count = n * plane;
  std::vector<std::int32_t> tg(targets.begin(), targets.end());
  const auto il = logits.id();
  return logits.tape().record(Tensor<T>({1}, {static_cast<T>(loss / static_cast<double>(count))}), {il},
                              [il, probs, tg = std::move(tg), n, k, plane, count](Tape<T>& t, std::size_t self) {
    const T g = t.grad_of(self)[0] / static_cast<T>(count);
    auto& dx = t.grad_buffer(il);
    const auto& p = *probs;
    for (I64 i = 0; i < n; ++i)
      for (I64 s = 0; s < plane; ++s) {
        const I64 base = i * k * plane + s;
        const std::int32_t y = tg[static_cast<std::size_t>(i * plane + s)];
        for (I64 j = 0; j < k; ++j) dx[base + j * plane] += g * (p[base + j * plane] - (j == y ? T{1} : T{0}));
      }
  });
}

#define UNNAS_INSTANTIATE_OPS(T)                                                                              \
  template Var<T> add(Var<T>, Var<T>);                                                                        \
  template Var<T> add_n(std::span<const Var<T>>);                                                             \
  template Var<T> mul(Var<T>, Var<T>);                                                                        \
  template Var<T> scale(Var<T>, T);                                                                           \
  template Var<T> scale_by(Var<T>, Var<T>, std::int64_t);                                                     \
  template Var<T> sum(Var<T>);                                                                                \
  template Var<T> mean(Var<T>);                                                                               \
  template Var<T> relu(Var<T>);                                                                               \
  template Var<T> conv2d(Var<T>, Var<T>, std::optional<Var<T>>, const ConvSpec&);                             \
  template Var<T> batch_norm(Var<T>, std::optional<Var<T>>, std::optional<Var<T>>, BatchNormState<T>&, bool); \
  template Var<T> max_pool2d(Var<T>, int, int, int);                                                          \
  template Var<T> avg_pool2d(Var<T>, int, int, int);                                                          \
  template Var<T> global_avg_pool(Var<T>);                                                                    \
  template Var<T> upsample_nearest(Var<T>, int);                                                              \
  template Var<T> shift_crop(Var<T>);                                                                         \
  template Var<T> concat_channels(std::span<const Var<T>>);                                                   \
  template Var<T> linear(Var<T>, Var<T>, std::optional<Var<T>>);                                              \
  template Var<T> softmax_rows(Var<T>);                                                                       \
  template Var<T> softmax_cross_entropy(Var<T>, std::span<const std::int32_t>);

UNNAS_INSTANTIATE_OPS(float)
UNNAS_INSTANTIATE_OPS(double)

#undef UNNAS_INSTANTIATE_OPS

}  // namespace unnas::ops
