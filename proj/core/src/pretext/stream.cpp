#include "unnas/pretext/stream.hpp"

#include <algorithm>
#include <numeric>

#include "unnas/error.hpp"

namespace unnas {

Tensor<float> augment_crop_flip(const Tensor<float>& image, int pad, Rng& rng) {
  const auto c = image.shape[0], h = image.shape[1], w = image.shape[2];
  const auto oy = static_cast<std::int64_t>(uniform_below(rng, static_cast<std::uint64_t>(2 * pad + 1))) - pad;
  const auto ox = static_cast<std::int64_t>(uniform_below(rng, static_cast<std::uint64_t>(2 * pad + 1))) - pad;
  const bool flip = uniform_below(rng, 2) == 1;
  Tensor<float> out(image.shape);
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) {
        const auto sy = y + oy, sx0 = x + ox;
        const auto sx = flip ? w - 1 - sx0 : sx0;
        if (sy >= 0 && sy < h && sx0 >= 0 && sx0 < w) out.data[(ch * h + y) * w + x] = image.data[(ch * h + sy) * w + sx];
      }
  return out;
}

Tensor<float> center_crop(const Tensor<float>& image, int side) {
  const auto c = image.shape[0], h = image.shape[1], w = image.shape[2];
  if (side <= 0 || (side >= h && side >= w)) return image;
  const auto sh = std::min<std::int64_t>(side, h), sw = std::min<std::int64_t>(side, w);
  const auto oy = (h - sh) / 2, ox = (w - sw) / 2;
  Tensor<float> out({c, sh, sw});
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t y = 0; y < sh; ++y)
      for (std::int64_t x = 0; x < sw; ++x) out.data[(ch * sh + y) * sw + x] = image.data[(ch * h + oy + y) * w + ox + x];
  return out;
}

StreamPlan::StreamPlan(std::int64_t size, std::uint64_t seed, const StreamConfig& cfg)
    : size_(size), seed_(seed), cfg_(cfg) {
  if (size < 1) throw ContractViolation("stream: dataset is empty");
  if (cfg.batch_size < 1) throw ContractViolation("stream: batch_size must be positive");
  if (cfg.pad < 0) throw ContractViolation("stream: pad must be >= 0");
}

std::int64_t StreamPlan::batches_per_epoch() const {
  const auto full = size_ / cfg_.batch_size;
  if (cfg_.drop_last && full > 0) return full;
  return (size_ + cfg_.batch_size - 1) / cfg_.batch_size;
}

std::vector<std::int64_t> StreamPlan::batch_positions(int epoch, std::int64_t b) const {
  if (b < 0 || b >= batches_per_epoch()) throw ContractViolation("stream: batch index out of range");
  std::vector<std::int64_t> order(static_cast<std::size_t>(size_));
  std::iota(order.begin(), order.end(), 0);
  if (cfg_.shuffle) {
    Rng rng(derive_seed(derive_seed(seed_, static_cast<std::uint64_t>(epoch)), ~std::uint64_t{0}));
    shuffle(order.begin(), order.end(), rng);
  }
  const auto begin = b * cfg_.batch_size;
  const auto end = std::min(size_, begin + cfg_.batch_size);
  return {order.begin() + begin, order.begin() + end};
}

Rng StreamPlan::example_rng(int epoch, std::int64_t position) const {
  return Rng(derive_seed(derive_seed(seed_, static_cast<std::uint64_t>(epoch)), static_cast<std::uint64_t>(position)));
}

namespace {

Batch stack(std::vector<PretextExample>& ex) {
  Shape s = ex.front().input.shape;
  s.insert(s.begin(), static_cast<std::int64_t>(ex.size()));
  Batch b{Tensor<float>(s), {}, ex.front().target_shape};
  const auto stride = ex.front().input.data.size();
  for (std::size_t i = 0; i < ex.size(); ++i) {
    std::copy(ex[i].input.data.begin(), ex[i].input.data.end(), b.inputs.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
    b.targets.insert(b.targets.end(), ex[i].target.begin(), ex[i].target.end());
  }
  return b;
}

}  // namespace

PretextStream::PretextStream(ImagesView images, Task task, std::uint64_t seed, StreamConfig cfg)
    : images_(std::move(images)), task_(task), plan_(images_.size(), seed, cfg) {
  if (!is_pretext(task)) throw ContractViolation("PretextStream: task must be rot, color or jigsaw");
  if (task == Task::jigsaw && cfg.jigsaw.K() < 1) throw ContractViolation("PretextStream: jigsaw config has no permutations");
  if (task == Task::color && cfg.color_bins < 2) throw ContractViolation("PretextStream: color bins must be >= 2");
}

int PretextStream::num_classes() const {
  return pretext_classes(task_, plan_.config().color_bins, plan_.config().jigsaw.K());
}

PretextExample PretextStream::example(int epoch, std::int64_t position) const {
  const auto& cfg = plan_.config();
  Rng rng = plan_.example_rng(epoch, position);
  Tensor<float> img = center_crop(images_.image_tensor(position), cfg.crop);
  if (cfg.augment) img = augment_crop_flip(img, cfg.pad, rng);
  switch (task_) {
    case Task::rot: return rotate_label(img, static_cast<int>(uniform_below(rng, 4)));
    case Task::jigsaw:
      return jigsaw_example(img, cfg.jigsaw, static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(cfg.jigsaw.K()))));
    case Task::color: return color_example(img, cfg.color_bins, cfg.color_pool);
    case Task::supv_cls: break;
  }
  throw ContractViolation("PretextStream: unsupported task");
}

Batch PretextStream::batch(int epoch, std::int64_t b) const {
  std::vector<PretextExample> ex;
  for (auto p : plan_.batch_positions(epoch, b)) ex.push_back(example(epoch, p));
  return stack(ex);
}

SupervisedStream::SupervisedStream(LabeledView data, std::uint64_t seed, StreamConfig cfg)
    : data_(std::move(data)), plan_(data_.size(), seed, cfg) {}

Batch SupervisedStream::batch(int epoch, std::int64_t b) const {
  const auto& cfg = plan_.config();
  std::vector<PretextExample> ex;
  for (auto p : plan_.batch_positions(epoch, b)) {
    Tensor<float> img = center_crop(data_.images().image_tensor(p), cfg.crop);
    if (cfg.augment) {
      Rng rng = plan_.example_rng(epoch, p);
      img = augment_crop_flip(img, cfg.pad, rng);
    }
    ex.push_back({std::move(img), {data_.label(p)}, {}});
  }
  return stack(ex);
}

}  // namespace unnas
