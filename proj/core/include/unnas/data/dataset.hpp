#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "unnas/autograd/tensor.hpp"

namespace unnas {

/// Dense stack of C x H x W float images in [0, 1].
struct ImageSet {
  std::int64_t channels = 3, height = 0, width = 0;
  std::vector<float> pixels;

  [[nodiscard]] std::int64_t image_size() const { return channels * height * width; }
  [[nodiscard]] std::int64_t count() const { return image_size() ? static_cast<std::int64_t>(pixels.size()) / image_size() : 0; }
  [[nodiscard]] std::span<const float> image(std::int64_t i) const {
    return {pixels.data() + i * image_size(), static_cast<std::size_t>(image_size())};
  }
};

/// Images without annotations. This is the only view a label-free code path
/// can hold; it has no way back to the labels.
class ImagesView {
 public:
  ImagesView() = default;
  ImagesView(std::shared_ptr<const ImageSet> set, std::vector<std::int64_t> indices)
      : set_(std::move(set)), indices_(std::move(indices)) {}

  [[nodiscard]] std::int64_t size() const { return static_cast<std::int64_t>(indices_.size()); }
  [[nodiscard]] std::span<const float> image(std::int64_t i) const { return set_->image(indices_.at(i)); }
  [[nodiscard]] Tensor<float> image_tensor(std::int64_t i) const;
  /// (C, H, W) of every image.
  [[nodiscard]] Shape image_shape() const { return {set_->channels, set_->height, set_->width}; }
  /// Positions [begin, end) of this view.
  [[nodiscard]] ImagesView slice(std::int64_t begin, std::int64_t end) const;

 private:
  std::shared_ptr<const ImageSet> set_;
  std::vector<std::int64_t> indices_;
};

/// Images with class labels, for supervised training and evaluation.
class LabeledView {
 public:
  LabeledView(ImagesView images, std::shared_ptr<const std::vector<std::int32_t>> labels,
              std::vector<std::int64_t> indices, int num_classes)
      : images_(std::move(images)), labels_(std::move(labels)), indices_(std::move(indices)), num_classes_(num_classes) {}

  [[nodiscard]] const ImagesView& images() const { return images_; }
  [[nodiscard]] std::int64_t size() const { return images_.size(); }
  [[nodiscard]] std::int32_t label(std::int64_t i) const { return (*labels_)[static_cast<std::size_t>(indices_.at(i))]; }
  [[nodiscard]] int num_classes() const { return num_classes_; }
  [[nodiscard]] LabeledView slice(std::int64_t begin, std::int64_t end) const;

 private:
  ImagesView images_;
  std::shared_ptr<const std::vector<std::int32_t>> labels_;
  std::vector<std::int64_t> indices_;
  int num_classes_;
};

/// A mounted dataset. Mounting images-only drops the labels, after which
/// `labeled()` throws LabelAccessDenied.
class Dataset {
 public:
  Dataset(std::string name, ImageSet images, std::vector<std::int32_t> labels, int num_classes);

  [[nodiscard]] const std::string& name() const { return name_; }
  [[nodiscard]] std::int64_t size() const { return static_cast<std::int64_t>(indices_.size()); }
  [[nodiscard]] bool has_labels() const { return labels_ != nullptr; }
  [[nodiscard]] int num_classes() const { return num_classes_; }

  [[nodiscard]] ImagesView images() const { return {set_, indices_}; }
  [[nodiscard]] LabeledView labeled() const;

  /// Same images, labels removed.
  [[nodiscard]] Dataset images_only() const;
  /// Positions [begin, end), labels kept if present.
  [[nodiscard]] Dataset subset(std::int64_t begin, std::int64_t end) const;
  /// The first `n` positions of a seeded permutation.
  [[nodiscard]] Dataset random_subset(std::int64_t n, std::uint64_t seed) const;

 private:
  Dataset() = default;

  std::string name_;
  std::shared_ptr<const ImageSet> set_;
  std::shared_ptr<const std::vector<std::int32_t>> labels_;
  std::vector<std::int64_t> indices_;
  int num_classes_ = 0;
};

/// Reads CIFAR-10 binary batches: 3073-byte records, one label byte followed by
/// 1024 R, 1024 G and 1024 B bytes, each plane row-major.
Dataset load_cifar10_batches(const std::vector<std::string>& paths, const std::string& name = "cifar10");
/// data_batch_1..5.bin (train) or test_batch.bin from a cifar-10-batches-bin directory.
Dataset load_cifar10_dir(const std::string& dir, bool train);
/// Writes records in the same format (used for tests and fixtures).
void write_cifar10_batch(const std::string& path, const ImageSet& images, std::span<const std::int32_t> labels);

/// Procedural dataset of `classes` shape kinds (up to 10) drawn in random
/// colors, positions and sizes over a top-lit background.
Dataset make_synthetic_shapes(std::int64_t n, int classes, int size, std::uint64_t seed);

}  // namespace unnas
