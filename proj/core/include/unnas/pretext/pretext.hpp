#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "unnas/autograd/tensor.hpp"
#include "unnas/rng.hpp"

namespace unnas {

/// Training objectives. Only supv_cls reads annotations.
enum class Task { supv_cls, rot, color, jigsaw };

std::string_view task_name(Task t);
/// Throws ContractViolation for unknown names.
Task task_from_name(std::string_view name);
inline bool is_pretext(Task t) { return t != Task::supv_cls; }

/// Input image plus either one class id (target_shape empty) or a per-pixel
/// class map of shape target_shape = (H', W').
struct PretextExample {
  Tensor<float> input;
  std::vector<std::int32_t> target;
  Shape target_shape;
};

/// Rotates a square (C, H, W) image by k * 90 degrees clockwise:
/// out(i, j) = x(H - 1 - j, i) for k = 1. Target is k.
PretextExample rotate_label(const Tensor<float>& image, int k);

struct JigsawConfig {
  int grid = 2;
  std::vector<std::vector<int>> permutations;

  [[nodiscard]] int K() const { return static_cast<int>(permutations.size()); }
};

/// All (g^2)! permutations in lexicographic order when K equals that count;
/// otherwise greedy max-min Hamming selection from the full enumeration,
/// seeded by one uniformly drawn permutation (ties: lowest lexicographic rank).
JigsawConfig jigsaw_permutation_set(int grid, int K, Rng& rng);

/// Center-crops so H and W divide by the grid, then places source patch q at
/// position permutations[perm_index][q]. Target is perm_index.
PretextExample jigsaw_example(const Tensor<float>& image, const JigsawConfig& config, int perm_index);

/// Opponent-color coordinates of an RGB pixel, each normalized to [0, 1]:
/// a from R - G, b from (R + G) / 2 - B.
std::array<double, 2> opponent_coords(double r, double g, double b);
/// Class of a pixel in the B x B grid: row from a, column from b.
int color_class(double r, double g, double b, int bins);
/// Bin center (a, b) of a class.
std::array<double, 2> color_bin_center(int cls, int bins);

/// Luminance input (1, H, W) and per-pixel color classes. With pool > 1 the
/// target is the majority class of each pool x pool block (ties: lowest class).
PretextExample color_example(const Tensor<float>& image, int bins, int pool = 1);

/// Output classes of a pretext head.
int pretext_classes(Task t, int bins, int jigsaw_K);

}  // namespace unnas
