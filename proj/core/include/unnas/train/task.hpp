#pragma once

#include <cstdint>
#include <memory>

#include "unnas/data/dataset.hpp"
#include "unnas/nn/network.hpp"
#include "unnas/pretext/stream.hpp"

namespace unnas {

/// Objective plus the knobs that fix its label space.
struct TaskSpec {
  Task task = Task::rot;
  int color_bins = 8;
  int color_pool = 4;
  int jigsaw_grid = 2;
  int jigsaw_K = 24;
  std::uint64_t jigsaw_seed = 0;  // fixes the permutation set across streams
};

/// Classes predicted for `spec` on a dataset with `dataset_classes` labels.
int task_classes(const TaskSpec& spec, int dataset_classes);
/// Channels of the network input (1 for colorization, which sees luminance).
std::int64_t task_input_channels(const TaskSpec& spec, std::int64_t image_channels);
/// Head kind, class count and pixel factor set for the task.
nn::NetworkConfig task_network_config(nn::NetworkConfig base, const TaskSpec& spec, int dataset_classes);
/// The preset permutation set; depends only on (grid, K, jigsaw_seed).
JigsawConfig task_jigsaw(const TaskSpec& spec);

/// Batches for `spec` over `data`. Label-free tasks read `data.images()` only;
/// supv_cls needs labels and throws LabelAccessDenied on an images-only mount.
std::unique_ptr<BatchSource> make_source(const Dataset& data, const TaskSpec& spec, std::uint64_t seed,
                                         StreamConfig cfg);

/// Loss of a batch under the task (image or per-pixel cross-entropy, plus aux).
template <typename T>
Var<T> task_loss(const nn::NetOutput<T>& out, const Batch& batch, double aux_weight);

}  // namespace unnas
