#pragma once

#include <span>

#include "unnas/autograd/tape.hpp"

namespace unnas {

struct SgdOptions {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
};

/// Classic momentum: v <- momentum*v + grad + wd*param; param <- param - lr*v.
template <typename T>
void sgd_step(std::span<Parameter<T>* const> params, const SgdOptions& opt);

struct AdamOptions {
  double lr = 3e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-3;  // L2, added to the gradient
};

template <typename T>
void adam_step(std::span<Parameter<T>* const> params, const AdamOptions& opt);

template <typename T>
void zero_grad(std::span<Parameter<T>* const> params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace unnas
