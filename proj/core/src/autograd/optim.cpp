#include "unnas/autograd/optim.hpp"

#include <cmath>

#include "unnas/error.hpp"

namespace unnas {

template <typename T>
void sgd_step(std::span<Parameter<T>* const> params, const SgdOptions& opt) {
  if (opt.lr < 0) throw ContractViolation("sgd_step: negative learning rate");
  const T lr = static_cast<T>(opt.lr), mom = static_cast<T>(opt.momentum), wd = static_cast<T>(opt.weight_decay);
  for (auto* p : params) {
    auto& v = p->value.data;
    if (p->grad.size() != v.size()) {
      throw ContractViolation("sgd_step: gradient of '" + p->name + "' has " + std::to_string(p->grad.size()) +
                              " entries, parameter has " + std::to_string(v.size()));
    }
    if (p->velocity.size() != v.size()) p->velocity.assign(v.size(), T{0});
    for (std::size_t i = 0; i < v.size(); ++i) {
      p->velocity[i] = mom * p->velocity[i] + p->grad[i] + wd * v[i];
      v[i] -= lr * p->velocity[i];
    }
    ++p->steps;
  }
}

template <typename T>
void adam_step(std::span<Parameter<T>* const> params, const AdamOptions& opt) {
  if (opt.lr < 0) throw ContractViolation("adam_step: negative learning rate");
  for (auto* p : params) {
    auto& v = p->value.data;
    if (p->grad.size() != v.size()) throw ContractViolation("adam_step: gradient/parameter size mismatch");
    if (p->velocity.size() != v.size()) p->velocity.assign(v.size(), T{0});
    if (p->second.size() != v.size()) p->second.assign(v.size(), T{0});
    ++p->steps;
    const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(p->steps));
    const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(p->steps));
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double g = static_cast<double>(p->grad[i]) + opt.weight_decay * static_cast<double>(v[i]);
      const double m = opt.beta1 * p->velocity[i] + (1.0 - opt.beta1) * g;
      const double s = opt.beta2 * p->second[i] + (1.0 - opt.beta2) * g * g;
      p->velocity[i] = static_cast<T>(m);
      p->second[i] = static_cast<T>(s);
      v[i] -= static_cast<T>(opt.lr * (m / c1) / (std::sqrt(s / c2) + opt.eps));
    }
  }
}

template void sgd_step<float>(std::span<Parameter<float>* const>, const SgdOptions&);
template void sgd_step<double>(std::span<Parameter<double>* const>, const SgdOptions&);
template void adam_step<float>(std::span<Parameter<float>* const>, const AdamOptions&);
template void adam_step<double>(std::span<Parameter<double>* const>, const AdamOptions&);

}  // namespace unnas
