#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "unnas/autograd/optim.hpp"
#include "unnas/autograd/schedule.hpp"
#include "unnas/train/task.hpp"

namespace unnas {

/// Everything that fixes a from-scratch training run except the architecture,
/// the data and the task.
struct TrainRecipe {
  int width = 16;
  int depth = 8;
  int epochs = 30;
  int warmup_epochs = 5;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 3e-4;
  std::int64_t batch_size = 64;
  bool auxiliary = true;   // only used at depth >= 8 with an image head
  double aux_weight = 0.4;
  int stem_stride_layers = 1;
  bool augment = true;
  int input_crop = 0;
  int color_bins = 8;
  int color_pool = 4;
  int jigsaw_grid = 2;
  int jigsaw_K = 24;
  std::int64_t max_batches_per_epoch = 0;   // 0: the full epoch
  std::uint64_t seed = 0;

  void validate() const;
  [[nodiscard]] TaskSpec task_spec(Task task) const;
  [[nodiscard]] nn::NetworkConfig network_config(Task task, int dataset_classes) const;
  [[nodiscard]] Schedule schedule() const { return {lr, warmup_epochs, epochs}; }
};

nlohmann::json recipe_to_json(const TrainRecipe& r);
/// Missing keys keep their defaults; unknown keys throw FormatError.
TrainRecipe recipe_from_json(const nlohmann::json& j);

struct TrainReport {
  std::string task;
  int epochs = 0;
  double final_train_loss = 0;   // mean over the last epoch (NaN when epochs == 0)
  double val_accuracy = 0;       // task accuracy on the validation split, in [0, 1]
  std::uint64_t seed = 0;
  double wall_time = 0;          // seconds
};

nlohmann::json report_to_json(const TrainReport& r);

/// One SGD step of `model` on `batch`; returns the loss before the update.
template <typename T>
double train_step(nn::Model<T>& model, const Batch& batch, const SgdOptions& opt, double aux_weight);

/// Fraction of correct targets (images, or pixels for per-pixel tasks) over
/// every batch of `source` at epoch 0, in inference mode.
template <typename T>
double evaluate_accuracy(nn::Model<T>& model, const BatchSource& source);

/// Trains `arch` from random init on `train` for `task` and scores the task on
/// `val`. Label-free tasks see images-only mounts of both splits. Throws
/// DivergenceError on a non-finite loss and ContractViolation on bad input.
TrainReport train_and_score(const Architecture& arch, const Dataset& train, const Dataset& val, Task task,
                            const TrainRecipe& recipe);

struct RepeatStats {
  double mean = 0;
  double std = 0;   // population standard deviation
  std::vector<double> values;
  std::vector<std::uint64_t> seeds;
};

/// Runs `job(seed)` for seeds derive_seed(base_seed, r), r < repeats.
RepeatStats repeat_and_average(const std::function<double(std::uint64_t)>& job, int repeats, std::uint64_t base_seed);

}  // namespace unnas
