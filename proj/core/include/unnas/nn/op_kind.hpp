#pragma once

#include <array>
#include <string>
#include <string_view>

namespace unnas {

/// Candidate operations of the cell search space. The enumeration order is the
/// tie-breaking order used by genotype derivation.
enum class OpKind {
  sep_conv_3x3,
  sep_conv_5x5,
  dil_conv_3x3,
  dil_conv_5x5,
  max_pool_3x3,
  avg_pool_3x3,
  skip_connect,
  zero,
};

inline constexpr int kNumOpKinds = 8;

inline constexpr std::array<OpKind, kNumOpKinds> kAllOps = {
    OpKind::sep_conv_3x3, OpKind::sep_conv_5x5, OpKind::dil_conv_3x3, OpKind::dil_conv_5x5,
    OpKind::max_pool_3x3, OpKind::avg_pool_3x3, OpKind::skip_connect, OpKind::zero,
};

/// Every op except `zero`; the sampling and derivation alphabet.
inline constexpr std::array<OpKind, kNumOpKinds - 1> kNonZeroOps = {
    OpKind::sep_conv_3x3, OpKind::sep_conv_5x5, OpKind::dil_conv_3x3, OpKind::dil_conv_5x5,
    OpKind::max_pool_3x3, OpKind::avg_pool_3x3, OpKind::skip_connect,
};

std::string_view op_name(OpKind kind);
/// Throws ContractViolation for unknown names.
OpKind op_from_name(std::string_view name);

inline int op_index(OpKind kind) { return static_cast<int>(kind); }

}  // namespace unnas
