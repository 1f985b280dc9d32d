#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "unnas/autograd/tape.hpp"

namespace unnas::ops {

// Elementwise and reductions.
template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> add_n(std::span<const Var<T>> xs);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
/// c * x for a compile-time-known constant c.
template <typename T> Var<T> scale(Var<T> x, T c);
/// weights[index] * x, differentiable in both.
template <typename T> Var<T> scale_by(Var<T> x, Var<T> weights, std::int64_t index);
template <typename T> Var<T> sum(Var<T> x);
template <typename T> Var<T> mean(Var<T> x);
template <typename T> Var<T> relu(Var<T> x);

struct ConvSpec {
  int stride = 1;
  int padding = 0;
  int dilation = 1;
  int groups = 1;
};

inline std::int64_t conv_out_extent(std::int64_t in, int kernel, const ConvSpec& s) {
  return (in + 2 * s.padding - s.dilation * (kernel - 1) - 1) / s.stride + 1;
}

/// NCHW convolution. `weight` is (Cout, Cin/groups, k, k); `bias` is (Cout).
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, std::optional<Var<T>> bias, const ConvSpec& spec);

template <typename T>
struct BatchNormState {
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);

  BatchNormState() = default;
  explicit BatchNormState(std::int64_t channels)
      : running_mean(static_cast<std::size_t>(channels), T{0}),
        running_var(static_cast<std::size_t>(channels), T{1}) {}
};

/// Per-channel normalization over (N, H, W). Training mode uses batch
/// statistics and updates `state`; eval mode uses the running averages.
template <typename T>
Var<T> batch_norm(Var<T> x, std::optional<Var<T>> gamma, std::optional<Var<T>> beta,
                  BatchNormState<T>& state, bool training);

template <typename T> Var<T> max_pool2d(Var<T> x, int kernel, int stride, int padding);
/// Average over in-bounds taps only (padding excluded from the divisor).
template <typename T> Var<T> avg_pool2d(Var<T> x, int kernel, int stride, int padding);
/// (N, C, H, W) -> (N, C).
template <typename T> Var<T> global_avg_pool(Var<T> x);
/// (N, C, H, W) -> (N, C, H*f, W*f).
template <typename T> Var<T> upsample_nearest(Var<T> x, int factor);
/// x[:, :, 1:, 1:] zero-padded back to (H, W).
template <typename T> Var<T> shift_crop(Var<T> x);
template <typename T> Var<T> concat_channels(std::span<const Var<T>> xs);

/// x (N, F) times weight (O, F) transposed, plus bias (O).
template <typename T> Var<T> linear(Var<T> x, Var<T> weight, std::optional<Var<T>> bias);

/// Row-wise softmax of a 2-D tensor.
template <typename T> Var<T> softmax_rows(Var<T> x);

/// Mean negative log-likelihood of integer targets under softmax over dim 1.
/// Logits are (N, K) or (N, K, H, W) with targets of N or N*H*W entries.
template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, std::span<const std::int32_t> targets);

}  // namespace unnas::ops
