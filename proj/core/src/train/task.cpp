#include "unnas/train/task.hpp"

#include "unnas/error.hpp"

namespace unnas {

namespace {
constexpr std::uint64_t kJigsawTag = 0x6a6967;
}

int task_classes(const TaskSpec& spec, int dataset_classes) {
  if (spec.task == Task::supv_cls) return dataset_classes;
  return pretext_classes(spec.task, spec.color_bins, spec.jigsaw_K);
}

std::int64_t task_input_channels(const TaskSpec& spec, std::int64_t image_channels) {
  return spec.task == Task::color ? 1 : image_channels;
}

nn::NetworkConfig task_network_config(nn::NetworkConfig base, const TaskSpec& spec, int dataset_classes) {
  base.num_classes = task_classes(spec, dataset_classes);
  if (spec.task == Task::color) {
    base.head = nn::HeadKind::pixel;
    base.pixel_factor = spec.color_pool;
    base.auxiliary = false;
  } else {
    base.head = nn::HeadKind::image;
  }
  return base;
}

JigsawConfig task_jigsaw(const TaskSpec& spec) {
  Rng rng(derive_seed(spec.jigsaw_seed, kJigsawTag));
  return jigsaw_permutation_set(spec.jigsaw_grid, spec.jigsaw_K, rng);
}

std::unique_ptr<BatchSource> make_source(const Dataset& data, const TaskSpec& spec, std::uint64_t seed,
                                         StreamConfig cfg) {
  if (spec.task == Task::supv_cls) return std::make_unique<SupervisedStream>(data.labeled(), seed, cfg);
  cfg.color_bins = spec.color_bins;
  cfg.color_pool = spec.color_pool;
  if (spec.task == Task::jigsaw) cfg.jigsaw = task_jigsaw(spec);
  return std::make_unique<PretextStream>(data.images(), spec.task, seed, cfg);
}

template <typename T>
Var<T> task_loss(const nn::NetOutput<T>& out, const Batch& batch, double aux_weight) {
  return nn::network_loss(out, batch.targets, aux_weight);
}

template Var<float> task_loss<float>(const nn::NetOutput<float>&, const Batch&, double);
template Var<double> task_loss<double>(const nn::NetOutput<double>&, const Batch&, double);

}  // namespace unnas
