#pragma once

#include <cstdint>
#include <vector>

#include "unnas/data/dataset.hpp"
#include "unnas/pretext/pretext.hpp"

namespace unnas {

struct Batch {
  Tensor<float> inputs;                 // (N, C, H, W)
  std::vector<std::int32_t> targets;    // N, or N * H' * W' for per-pixel targets
  Shape target_shape;                   // empty, or (H', W')
};

struct StreamConfig {
  std::int64_t batch_size = 64;
  bool shuffle = true;
  bool drop_last = true;   // drop a trailing partial batch (kept when it is the only one)
  bool augment = true;     // pad + random crop + horizontal flip, before the pretext transform
  int pad = 4;
  int crop = 0;            // center-crop to crop x crop first (0 keeps the full image)
  int color_bins = 8;
  int color_pool = 4;      // per-pixel targets at 1/color_pool resolution
  JigsawConfig jigsaw;     // required for Task::jigsaw
};

/// Pad-`pad` random crop plus horizontal flip of a (C, H, W) image.
Tensor<float> augment_crop_flip(const Tensor<float>& image, int pad, Rng& rng);

/// Seeded example order and per-example randomness. Example `i` of epoch `e`
/// draws from derive_seed(derive_seed(seed, e), i), so its content does not
/// depend on batching.
class StreamPlan {
 public:
  StreamPlan(std::int64_t size, std::uint64_t seed, const StreamConfig& cfg);
  [[nodiscard]] std::int64_t batches_per_epoch() const;
  /// Dataset positions of batch `b` of `epoch`.
  [[nodiscard]] std::vector<std::int64_t> batch_positions(int epoch, std::int64_t b) const;
  [[nodiscard]] Rng example_rng(int epoch, std::int64_t position) const;
  [[nodiscard]] const StreamConfig& config() const { return cfg_; }

 private:
  std::int64_t size_;
  std::uint64_t seed_;
  StreamConfig cfg_;
};

/// Anything that yields numbered batches per epoch.
class BatchSource {
 public:
  virtual ~BatchSource() = default;
  [[nodiscard]] virtual std::int64_t batches_per_epoch() const = 0;
  [[nodiscard]] virtual Batch batch(int epoch, std::int64_t b) const = 0;
  [[nodiscard]] virtual std::int64_t size() const = 0;
};

/// Center crop of a (C, H, W) image to side x side (no-op when side is 0 or too large).
Tensor<float> center_crop(const Tensor<float>& image, int side);

/// Label-free example stream. It only ever sees an images-only view.
class PretextStream final : public BatchSource {
 public:
  PretextStream(ImagesView images, Task task, std::uint64_t seed, StreamConfig cfg);

  [[nodiscard]] std::int64_t batches_per_epoch() const override { return plan_.batches_per_epoch(); }
  [[nodiscard]] PretextExample example(int epoch, std::int64_t position) const;
  [[nodiscard]] Batch batch(int epoch, std::int64_t b) const override;
  [[nodiscard]] std::int64_t size() const override { return images_.size(); }
  [[nodiscard]] Task task() const { return task_; }
  [[nodiscard]] int num_classes() const;

 private:
  ImagesView images_;
  Task task_;
  StreamPlan plan_;
};

/// Annotated stream for the supervised objective, same augmentation.
class SupervisedStream final : public BatchSource {
 public:
  SupervisedStream(LabeledView data, std::uint64_t seed, StreamConfig cfg);

  [[nodiscard]] std::int64_t batches_per_epoch() const override { return plan_.batches_per_epoch(); }
  [[nodiscard]] Batch batch(int epoch, std::int64_t b) const override;
  [[nodiscard]] std::int64_t size() const override { return data_.size(); }
  [[nodiscard]] int num_classes() const { return data_.num_classes(); }

 private:
  LabeledView data_;
  StreamPlan plan_;
};

}  // namespace unnas
