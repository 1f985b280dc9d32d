#pragma once

namespace unnas {

/// Cosine annealing with a linear per-epoch warmup.
struct Schedule {
  double init_lr = 0.1;
  int warmup_epochs = 0;
  int total_epochs = 1;

  void validate() const;
};

/// Warmup epochs ramp as init_lr*(e+1)/warmup; afterwards
/// 0.5*init_lr*(1 + cos(pi*(e - warmup)/(total - warmup))). Valid for
/// 0 <= e <= total_epochs.
double cosine_lr(const Schedule& schedule, int epoch);

}  // namespace unnas
