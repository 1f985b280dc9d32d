#include "unnas/pretext/pretext.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "unnas/error.hpp"

namespace unnas {

std::string_view task_name(Task t) {
  switch (t) {
    case Task::supv_cls: return "supv_cls";
    case Task::rot: return "rot";
    case Task::color: return "color";
    case Task::jigsaw: return "jigsaw";
  }
  throw ContractViolation("task_name: unknown task");
}

Task task_from_name(std::string_view name) {
  for (Task t : {Task::supv_cls, Task::rot, Task::color, Task::jigsaw}) {
    if (task_name(t) == name) return t;
  }
  throw ContractViolation("unknown task '" + std::string(name) + "' (expected supv_cls, rot, color or jigsaw)");
}

int pretext_classes(Task t, int bins, int jigsaw_K) {
  switch (t) {
    case Task::rot: return 4;
    case Task::color: return bins * bins;
    case Task::jigsaw: return jigsaw_K;
    case Task::supv_cls: break;
  }
  throw ContractViolation("pretext_classes: supv_cls is not a pretext task");
}

// --- rotation ------------------------------------------------------------

PretextExample rotate_label(const Tensor<float>& image, int k) {
  if (image.rank() != 3) throw ContractViolation("rotate_label: expected a (C, H, W) image");
  const auto c = image.shape[0], h = image.shape[1], w = image.shape[2];
  if (h != w) throw ContractViolation("rotate_label: image must be square, got " + shape_str(image.shape));
  if (k < 0 || k > 3) throw ContractViolation("rotate_label: k must be in 0..3");
  Tensor<float> out = image;
  for (int step = 0; step < k; ++step) {
    Tensor<float> next(image.shape);
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t i = 0; i < h; ++i)
        for (std::int64_t j = 0; j < w; ++j) next.data[(ch * h + i) * w + j] = out.data[(ch * h + (h - 1 - j)) * w + i];
    out = std::move(next);
  }
  return {std::move(out), {k}, {}};
}

// --- jigsaw --------------------------------------------------------------

namespace {

int hamming(const std::vector<int>& a, const std::vector<int>& b) {
  int d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

std::uint64_t factorial(int n) {
  std::uint64_t f = 1;
  for (int i = 2; i <= n; ++i) f *= static_cast<std::uint64_t>(i);
  return f;
}

}  // namespace

JigsawConfig jigsaw_permutation_set(int grid, int K, Rng& rng) {
  if (grid < 1 || grid > 3) throw ContractViolation("jigsaw_permutation_set: grid must be 1, 2 or 3");
  const int n = grid * grid;
  const auto total = factorial(n);
  if (K < 1 || static_cast<std::uint64_t>(K) > total) {
    throw ContractViolation("jigsaw_permutation_set: K = " + std::to_string(K) + " exceeds " + std::to_string(total) +
                            " permutations");
  }
  std::vector<std::vector<int>> all;
  all.reserve(total);
  std::vector<int> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  do all.push_back(p);
  while (std::next_permutation(p.begin(), p.end()));

  JigsawConfig cfg{grid, {}};
  if (static_cast<std::uint64_t>(K) == total) {
    cfg.permutations = std::move(all);
    return cfg;
  }
  std::vector<int> min_dist(all.size(), n + 1);
  std::vector<bool> taken(all.size(), false);
  std::size_t pick = uniform_below(rng, all.size());
  for (int k = 0; k < K; ++k) {
    if (k > 0) {
      pick = all.size();
      for (std::size_t i = 0; i < all.size(); ++i) {
        if (!taken[i] && (pick == all.size() || min_dist[i] > min_dist[pick])) pick = i;
      }
    }
    taken[pick] = true;
    cfg.permutations.push_back(all[pick]);
    for (std::size_t i = 0; i < all.size(); ++i) min_dist[i] = std::min(min_dist[i], hamming(all[i], all[pick]));
  }
  return cfg;
}

PretextExample jigsaw_example(const Tensor<float>& image, const JigsawConfig& config, int perm_index) {
  if (image.rank() != 3) throw ContractViolation("jigsaw_example: expected a (C, H, W) image");
  if (perm_index < 0 || perm_index >= config.K()) {
    throw ContractViolation("jigsaw_example: permutation index " + std::to_string(perm_index) + " not in [0, " +
                            std::to_string(config.K()) + ")");
  }
  const int g = config.grid;
  const auto& perm = config.permutations[static_cast<std::size_t>(perm_index)];
  if (static_cast<int>(perm.size()) != g * g) throw ContractViolation("jigsaw_example: permutation size mismatch");
  const auto c = image.shape[0], h = image.shape[1], w = image.shape[2];
  const auto hc = h - h % g, wc = w - w % g;
  if (hc == 0 || wc == 0) throw ContractViolation("jigsaw_example: image smaller than the grid");
  const auto oy = (h % g) / 2, ox = (w % g) / 2;
  const auto ph = hc / g, pw = wc / g;
  Tensor<float> out({c, hc, wc});
  for (int q = 0; q < g * g; ++q) {
    const int src_r = q / g, src_c = q % g;
    const int dst_r = perm[q] / g, dst_c = perm[q] % g;
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t y = 0; y < ph; ++y)
        for (std::int64_t x = 0; x < pw; ++x) {
          out.data[(ch * hc + dst_r * ph + y) * wc + dst_c * pw + x] =
              image.data[(ch * h + oy + src_r * ph + y) * w + ox + src_c * pw + x];
        }
  }
  return {std::move(out), {perm_index}, {}};
}

// --- colorization --------------------------------------------------------

std::array<double, 2> opponent_coords(double r, double g, double b) {
  return {(r - g + 1.0) / 2.0, ((r + g) / 2.0 - b + 1.0) / 2.0};
}

int color_class(double r, double g, double b, int bins) {
  if (bins < 2) throw ContractViolation("color bins must be >= 2");
  const auto [u, v] = opponent_coords(r, g, b);
  auto bin = [bins](double t) { return std::clamp(static_cast<int>(std::floor(t * bins)), 0, bins - 1); };
  return bin(u) * bins + bin(v);
}

std::array<double, 2> color_bin_center(int cls, int bins) {
  if (bins < 2) throw ContractViolation("color bins must be >= 2");
  if (cls < 0 || cls >= bins * bins) throw ContractViolation("color class out of range");
  return {(cls / bins + 0.5) / bins, (cls % bins + 0.5) / bins};
}

PretextExample color_example(const Tensor<float>& image, int bins, int pool) {
  if (bins < 2) throw ContractViolation("color_example: bins must be >= 2");
  if (image.rank() != 3 || image.shape[0] != 3) throw ContractViolation("color_example: expected a (3, H, W) image");
  if (pool < 1) throw ContractViolation("color_example: pool must be >= 1");
  const auto h = image.shape[1], w = image.shape[2], plane = h * w;
  if (h % pool || w % pool) throw ContractViolation("color_example: H and W must divide by the pool factor");
  Tensor<float> lum({1, h, w});
  std::vector<int> cls(static_cast<std::size_t>(plane));
  for (std::int64_t i = 0; i < plane; ++i) {
    const double r = image.data[i], g = image.data[plane + i], b = image.data[2 * plane + i];
    lum.data[i] = static_cast<float>(0.299 * r + 0.587 * g + 0.114 * b);
    cls[i] = color_class(r, g, b, bins);
  }
  const auto th = h / pool, tw = w / pool;
  std::vector<std::int32_t> target(static_cast<std::size_t>(th * tw));
  std::vector<int> votes(static_cast<std::size_t>(bins * bins));
  for (std::int64_t by = 0; by < th; ++by)
    for (std::int64_t bx = 0; bx < tw; ++bx) {
      std::fill(votes.begin(), votes.end(), 0);
      for (int y = 0; y < pool; ++y)
        for (int x = 0; x < pool; ++x) ++votes[cls[(by * pool + y) * w + bx * pool + x]];
      target[by * tw + bx] = static_cast<std::int32_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    }
  return {std::move(lum), std::move(target), {th, tw}};
}

}  // namespace unnas
