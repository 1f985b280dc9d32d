#include "unnas/autograd/schedule.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "unnas/error.hpp"

namespace unnas {

void Schedule::validate() const {
  if (init_lr < 0) throw ContractViolation("schedule: init_lr must be >= 0");
  if (warmup_epochs < 0) throw ContractViolation("schedule: warmup_epochs must be >= 0");
  if (total_epochs <= warmup_epochs) throw ContractViolation("schedule: total_epochs must exceed warmup_epochs");
}

double cosine_lr(const Schedule& s, int epoch) {
  s.validate();
  if (epoch < 0 || epoch > s.total_epochs) {
    throw ContractViolation("cosine_lr: epoch " + std::to_string(epoch) + " outside [0, " +
                            std::to_string(s.total_epochs) + "]");
  }
  if (epoch < s.warmup_epochs) return s.init_lr * (epoch + 1) / s.warmup_epochs;
  const double t = static_cast<double>(epoch - s.warmup_epochs) / (s.total_epochs - s.warmup_epochs);
  return 0.5 * s.init_lr * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace unnas
