#include "unnas/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "unnas/error.hpp"
#include "unnas/rng.hpp"

namespace unnas {

namespace {

std::vector<std::int64_t> sliced(const std::vector<std::int64_t>& idx, std::int64_t begin, std::int64_t end) {
  if (begin < 0 || end < begin || end > static_cast<std::int64_t>(idx.size())) {
    throw ContractViolation("slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of range");
  }
  return {idx.begin() + begin, idx.begin() + end};
}

}  // namespace

Tensor<float> ImagesView::image_tensor(std::int64_t i) const {
  auto px = image(i);
  return Tensor<float>(image_shape(), std::vector<float>(px.begin(), px.end()));
}

ImagesView ImagesView::slice(std::int64_t begin, std::int64_t end) const { return {set_, sliced(indices_, begin, end)}; }

LabeledView LabeledView::slice(std::int64_t begin, std::int64_t end) const {
  return {images_.slice(begin, end), labels_, sliced(indices_, begin, end), num_classes_};
}

Dataset::Dataset(std::string name, ImageSet images, std::vector<std::int32_t> labels, int num_classes)
    : name_(std::move(name)), num_classes_(num_classes) {
  const auto n = images.count();
  if (images.image_size() <= 0 || static_cast<std::int64_t>(images.pixels.size()) != n * images.image_size()) {
    throw ContractViolation("dataset: pixel buffer does not hold whole images");
  }
  if (!labels.empty()) {
    if (static_cast<std::int64_t>(labels.size()) != n) throw ContractViolation("dataset: label count mismatch");
    for (auto y : labels) {
      if (y < 0 || y >= num_classes) throw ContractViolation("dataset: label out of range");
    }
    labels_ = std::make_shared<const std::vector<std::int32_t>>(std::move(labels));
  }
  set_ = std::make_shared<const ImageSet>(std::move(images));
  indices_.resize(static_cast<std::size_t>(n));
  std::iota(indices_.begin(), indices_.end(), 0);
}

LabeledView Dataset::labeled() const {
  if (!labels_) throw LabelAccessDenied("dataset '" + name_ + "' is mounted images-only; labels are not accessible");
  return {images(), labels_, indices_, num_classes_};
}

Dataset Dataset::images_only() const {
  Dataset d = *this;
  d.labels_.reset();
  return d;
}

Dataset Dataset::subset(std::int64_t begin, std::int64_t end) const {
  Dataset d = *this;
  d.indices_ = sliced(indices_, begin, end);
  return d;
}

Dataset Dataset::random_subset(std::int64_t n, std::uint64_t seed) const {
  if (n < 0 || n > size()) throw ContractViolation("random_subset: size out of range");
  Dataset d = *this;
  Rng rng(seed);
  shuffle(d.indices_.begin(), d.indices_.end(), rng);
  d.indices_.resize(static_cast<std::size_t>(n));
  return d;
}

// --- CIFAR-10 binary -----------------------------------------------------

namespace {
constexpr std::int64_t kCifarSide = 32;
constexpr std::int64_t kCifarPixels = 3 * kCifarSide * kCifarSide;
constexpr std::int64_t kCifarRecord = 1 + kCifarPixels;
}  // namespace

Dataset load_cifar10_batches(const std::vector<std::string>& paths, const std::string& name) {
  ImageSet set{3, kCifarSide, kCifarSide, {}};
  std::vector<std::int32_t> labels;
  std::vector<unsigned char> rec(kCifarRecord);
  for (const auto& path : paths) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open CIFAR batch " + path);
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::int64_t>(in.tellg());
    in.seekg(0);
    if (bytes % kCifarRecord != 0) {
      throw FormatError(path + ": size " + std::to_string(bytes) + " is not a multiple of 3073-byte records");
    }
    for (std::int64_t r = 0; r < bytes / kCifarRecord; ++r) {
      in.read(reinterpret_cast<char*>(rec.data()), kCifarRecord);
      if (!in) throw FormatError(path + ": truncated record " + std::to_string(r));
      if (rec[0] > 9) throw FormatError(path + ": record " + std::to_string(r) + " has label " + std::to_string(rec[0]));
      labels.push_back(rec[0]);
      for (std::int64_t i = 0; i < kCifarPixels; ++i) set.pixels.push_back(static_cast<float>(rec[1 + i]) / 255.0f);
    }
  }
  if (labels.empty()) throw FormatError("no CIFAR records read");
  return Dataset(name, std::move(set), std::move(labels), 10);
}

Dataset load_cifar10_dir(const std::string& dir, bool train) {
  std::vector<std::string> paths;
  if (train) {
    for (int i = 1; i <= 5; ++i) paths.push_back(dir + "/data_batch_" + std::to_string(i) + ".bin");
  } else {
    paths.push_back(dir + "/test_batch.bin");
  }
  return load_cifar10_batches(paths, train ? "cifar10-train" : "cifar10-test");
}

void write_cifar10_batch(const std::string& path, const ImageSet& images, std::span<const std::int32_t> labels) {
  if (images.channels != 3 || images.height != kCifarSide || images.width != kCifarSide) {
    throw ContractViolation("write_cifar10_batch: images must be 3 x 32 x 32");
  }
  if (static_cast<std::int64_t>(labels.size()) != images.count()) throw ContractViolation("write_cifar10_batch: label count");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  for (std::int64_t r = 0; r < images.count(); ++r) {
    out.put(static_cast<char>(labels[static_cast<std::size_t>(r)]));
    for (float v : images.image(r)) out.put(static_cast<char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
  }
}

// --- synthetic shapes ----------------------------------------------------

namespace {

// Inside test for shape `kind` at offset (dx, dy) from the center, radius r.
bool inside(int kind, double dx, double dy, double r) {
  const double ax = std::abs(dx), ay = std::abs(dy), d = std::hypot(dx, dy);
  const double t = 0.3 * r;
  switch (kind) {
    case 0: return d <= r;                                            // disk
    case 1: return ax <= 0.8 * r && ay <= 0.8 * r;                   // square
    case 2: return dy <= 0.8 * r && dy >= -r && ax <= 0.5 * (dy + r);  // upward triangle
    case 3: return (ax <= t && ay <= r) || (ay <= t && ax <= r);     // plus
    case 4: return d <= r && d >= 0.55 * r;                           // ring
    case 5: return ax <= r && ay <= t;                                // horizontal bar
    case 6: return ay <= r && ax <= t;                                // vertical bar
    case 7: return ax + ay <= r;                                      // diamond
    case 8: return (dx >= -r && dx <= -r + 2 * t && ay <= r) || (dy >= r - 2 * t && dy <= r && ax <= r);  // L
    default: return ax <= r && (std::abs(dx - dy) <= 1.2 * t || std::abs(dx + dy) <= 1.2 * t);  // X
  }
}

}  // namespace

Dataset make_synthetic_shapes(std::int64_t n, int classes, int size, std::uint64_t seed) {
  if (classes < 2 || classes > 10) throw ContractViolation("synthetic shapes: classes must be in [2, 10]");
  if (size < 8) throw ContractViolation("synthetic shapes: size must be >= 8");
  if (n < 1) throw ContractViolation("synthetic shapes: n must be positive");
  Rng rng(seed);
  ImageSet set{3, size, size, std::vector<float>(static_cast<std::size_t>(n * 3 * size * size))};
  std::vector<std::int32_t> labels(static_cast<std::size_t>(n));
  const auto plane = static_cast<std::int64_t>(size) * size;
  for (std::int64_t i = 0; i < n; ++i) {
    const int kind = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(classes)));
    labels[static_cast<std::size_t>(i)] = kind;
    double bg[3], fg[3];
    for (double& c : bg) c = uniform_real(rng, 0.1, 0.5);
    for (double& c : fg) c = uniform_real(rng, 0.0, 1.0);
    fg[uniform_below(rng, 3)] = uniform_real(rng, 0.85, 1.0);  // keep the shape saturated
    const double r = uniform_real(rng, 0.22, 0.34) * size;
    const double cx = uniform_real(rng, r, size - r), cy = uniform_real(rng, r, size - r);
    float* img = set.pixels.data() + i * 3 * plane;
    for (int y = 0; y < size; ++y) {
      const double light = 1.0 - 0.6 * y / size;  // brighter at the top
      for (int x = 0; x < size; ++x) {
        const bool in = inside(kind, x + 0.5 - cx, y + 0.5 - cy, r);
        for (int c = 0; c < 3; ++c) {
          const double v = (in ? fg[c] : bg[c] * light) + 0.03 * standard_normal(rng);
          img[c * plane + y * size + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
    }
  }
  return Dataset("synthetic-shapes", std::move(set), std::move(labels), classes);
}

}  // namespace unnas
