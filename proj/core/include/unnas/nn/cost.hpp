#pragma once

#include <cstdint>

namespace unnas {

/// Analytic per-image cost. `flops` counts a multiply-accumulate as two.
struct CostStats {
  std::int64_t flops = 0;
  std::int64_t params = 0;

  [[nodiscard]] std::int64_t macs() const { return flops / 2; }

  CostStats& operator+=(const CostStats& o) {
    flops += o.flops;
    params += o.params;
    return *this;
  }
  friend CostStats operator+(CostStats a, const CostStats& b) { return a += b; }
  friend bool operator==(const CostStats&, const CostStats&) = default;
};

/// k x k convolution producing (cout, ho, wo).
inline CostStats conv_cost(std::int64_t cin, std::int64_t cout, int k, std::int64_t ho, std::int64_t wo,
                           int groups = 1, bool bias = false) {
  const std::int64_t w = static_cast<std::int64_t>(k) * k * (cin / groups) * cout;
  return {2 * w * ho * wo, w + (bias ? cout : 0)};
}

inline CostStats linear_cost(std::int64_t in, std::int64_t out, bool bias = true) {
  return {2 * in * out, in * out + (bias ? out : 0)};
}

/// Affine batch norm: two parameters per channel, not counted as FLOPs.
inline CostStats batch_norm_cost(std::int64_t channels, bool affine = true) { return {0, affine ? 2 * channels : 0}; }

}  // namespace unnas
