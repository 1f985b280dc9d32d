#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <type_traits>

#include "unnas/error.hpp"
#include "unnas/pretext/stream.hpp"

namespace unnas {
namespace {

Tensor<float> random_image(Rng& rng, std::int64_t c, std::int64_t h, std::int64_t w) {
  Tensor<float> t({c, h, w});
  for (auto& v : t.data) v = static_cast<float>(uniform01(rng));
  return t;
}

// --- rotation ------------------------------------------------------------

TEST(Rotate, IdentityAtZero) {
  Rng rng(1);
  const auto x = random_image(rng, 3, 5, 5);
  const auto r = rotate_label(x, 0);
  EXPECT_EQ(r.input.data, x.data);
  EXPECT_EQ(r.target, std::vector<std::int32_t>{0});
}

TEST(Rotate, IndexAlgebraOnToy) {
  Tensor<float> x({1, 3, 3});
  for (int i = 0; i < 9; ++i) x.data[i] = static_cast<float>(i);
  const auto r = rotate_label(x, 1);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_EQ(r.input.data[i * 3 + j], x.data[(3 - 1 - j) * 3 + i]) << i << "," << j;
  EXPECT_EQ(r.target, std::vector<std::int32_t>{1});
}

TEST(Rotate, FourCycleGroupProperty) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto n = 1 + static_cast<std::int64_t>(uniform_below(rng, 9));
    const auto x = random_image(rng, 3, n, n);
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) {
        const auto composed = rotate_label(rotate_label(x, a).input, b).input;
        EXPECT_EQ(composed.data, rotate_label(x, (a + b) % 4).input.data);
      }
    EXPECT_EQ(rotate_label(rotate_label(x, 1).input, 1).input.data, rotate_label(x, 2).input.data);
  }
}

TEST(Rotate, Errors) {
  Tensor<float> x({3, 4, 5});
  EXPECT_THROW(rotate_label(x, 1), ContractViolation);
  Tensor<float> sq({3, 4, 4});
  EXPECT_THROW(rotate_label(sq, 4), ContractViolation);
}

// --- jigsaw --------------------------------------------------------------

TEST(Jigsaw, AllTwentyFourPermutations) {
  Rng rng(3);
  const auto cfg = jigsaw_permutation_set(2, 24, rng);
  ASSERT_EQ(cfg.K(), 24);
  std::set<std::vector<int>> seen(cfg.permutations.begin(), cfg.permutations.end());
  EXPECT_EQ(seen.size(), 24u);
  for (const auto& p : cfg.permutations) EXPECT_TRUE(std::is_permutation(p.begin(), p.end(), std::vector{0, 1, 2, 3}.begin()));
  EXPECT_TRUE(std::is_sorted(cfg.permutations.begin(), cfg.permutations.end()));
}

TEST(Jigsaw, TooManyPermutationsRejected) {
  Rng rng(4);
  EXPECT_THROW(jigsaw_permutation_set(2, 25, rng), ContractViolation);
  EXPECT_THROW(jigsaw_permutation_set(4, 2, rng), ContractViolation);
}

int min_pairwise_hamming(const std::vector<std::vector<int>>& s) {
  int best = 1 << 30;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = i + 1; j < s.size(); ++j) {
      int d = 0;
      for (std::size_t k = 0; k < s[i].size(); ++k) d += s[i][k] != s[j][k];
      best = std::min(best, d);
    }
  return best;
}

TEST(Jigsaw, GreedySetBeatsRandomSubsetMedian) {
  Rng rng(5);
  const auto cfg = jigsaw_permutation_set(3, 4, rng);
  std::set<std::vector<int>> distinct(cfg.permutations.begin(), cfg.permutations.end());
  EXPECT_EQ(distinct.size(), 4u);
  // Monte Carlo baseline: min distance of 1000 random 4-subsets
  std::vector<int> base(9);
  std::iota(base.begin(), base.end(), 0);
  std::vector<int> mins;
  for (int t = 0; t < 1000; ++t) {
    std::vector<std::vector<int>> subset;
    while (subset.size() < 4) {
      auto p = base;
      shuffle(p.begin(), p.end(), rng);
      if (std::find(subset.begin(), subset.end(), p) == subset.end()) subset.push_back(p);
    }
    mins.push_back(min_pairwise_hamming(subset));
  }
  std::nth_element(mins.begin(), mins.begin() + 500, mins.end());
  EXPECT_GE(min_pairwise_hamming(cfg.permutations), mins[500]);
  EXPECT_EQ(min_pairwise_hamming(cfg.permutations), 9);
}

TEST(Jigsaw, PairwiseDistinctForManySizes) {
  Rng rng(6);
  for (int K : {1, 2, 7, 23}) {
    const auto cfg = jigsaw_permutation_set(2, K, rng);
    std::set<std::vector<int>> s(cfg.permutations.begin(), cfg.permutations.end());
    EXPECT_EQ(static_cast<int>(s.size()), K);
  }
}

TEST(Jigsaw, IdentityLeavesImage) {
  Rng rng(7);
  const auto cfg = jigsaw_permutation_set(2, 24, rng);
  const auto x = random_image(rng, 3, 8, 8);
  const auto e = jigsaw_example(x, cfg, 0);  // lexicographic rank 0 is the identity
  EXPECT_EQ(e.input.data, x.data);
  EXPECT_EQ(e.target, std::vector<std::int32_t>{0});
}

TEST(Jigsaw, PatchComesFromInversePosition) {
  Rng rng(8);
  const auto cfg = jigsaw_permutation_set(2, 24, rng);
  Tensor<float> x({1, 4, 4});
  for (int i = 0; i < 16; ++i) x.data[i] = static_cast<float>(i);
  for (int k = 0; k < 24; ++k) {
    const auto& perm = cfg.permutations[k];
    std::vector<int> inv(4);
    for (int q = 0; q < 4; ++q) inv[perm[q]] = q;
    const auto out = jigsaw_example(x, cfg, k).input;
    for (int y = 0; y < 4; ++y)
      for (int xx = 0; xx < 4; ++xx) {
        const int dst = (y / 2) * 2 + xx / 2;
        const int src = inv[dst];
        const int sy = (src / 2) * 2 + y % 2, sx = (src % 2) * 2 + xx % 2;
        EXPECT_EQ(out.data[y * 4 + xx], x.data[sy * 4 + sx]);
      }
  }
}

TEST(Jigsaw, InversePermutationRestores) {
  Rng rng(9);
  const auto cfg = jigsaw_permutation_set(2, 24, rng);
  const auto x = random_image(rng, 3, 6, 6);
  for (int k = 0; k < 24; ++k) {
    std::vector<int> inv(4);
    for (int q = 0; q < 4; ++q) inv[cfg.permutations[k][q]] = q;
    const int inv_k = static_cast<int>(std::find(cfg.permutations.begin(), cfg.permutations.end(), inv) - cfg.permutations.begin());
    EXPECT_EQ(jigsaw_example(jigsaw_example(x, cfg, k).input, cfg, inv_k).input.data, x.data);
  }
}

TEST(Jigsaw, CenterCropAndBadIndex) {
  Rng rng(10);
  const auto cfg = jigsaw_permutation_set(3, 5, rng);
  const auto e = jigsaw_example(random_image(rng, 3, 10, 11), cfg, 2);
  EXPECT_EQ(e.input.shape, (Shape{3, 9, 9}));
  EXPECT_THROW(jigsaw_example(random_image(rng, 3, 9, 9), cfg, 5), ContractViolation);
  EXPECT_THROW(jigsaw_example(random_image(rng, 3, 9, 9), cfg, -1), ContractViolation);
}

// --- colorization --------------------------------------------------------

TEST(Color, GrayPixelFallsInCenterBin) {
  for (int bins : {2, 5, 8, 13}) {
    for (double v : {0.0, 0.3, 1.0}) {
      EXPECT_EQ(color_class(v, v, v, bins), (bins / 2) * bins + bins / 2) << bins;
      const auto [a, b] = opponent_coords(v, v, v);
      EXPECT_DOUBLE_EQ(a, 0.5);
      EXPECT_DOUBLE_EQ(b, 0.5);
    }
  }
}

TEST(Color, ClassCountAndRange) {
  Rng rng(11);
  const int bins = 6;
  std::set<int> seen;
  for (int i = 0; i < 20000; ++i) {
    const int c = color_class(uniform01(rng), uniform01(rng), uniform01(rng), bins);
    ASSERT_GE(c, 0);
    ASSERT_LT(c, bins * bins);
    seen.insert(c);
  }
  EXPECT_LE(static_cast<int>(seen.size()), bins * bins);
  EXPECT_EQ(pretext_classes(Task::color, bins, 0), 36);
  EXPECT_THROW(color_class(0, 0, 0, 1), ContractViolation);
}

TEST(Color, DequantizeWithinHalfBin) {
  Rng rng(12);
  for (int bins : {2, 8, 16}) {
    for (int i = 0; i < 1000; ++i) {
      const double r = uniform01(rng), g = uniform01(rng), b = uniform01(rng);
      const auto coords = opponent_coords(r, g, b);
      const auto center = color_bin_center(color_class(r, g, b, bins), bins);
      EXPECT_LE(std::abs(coords[0] - center[0]), 0.5 / bins + 1e-12);
      EXPECT_LE(std::abs(coords[1] - center[1]), 0.5 / bins + 1e-12);
    }
  }
}

TEST(Color, LuminanceAndPooledTarget) {
  Rng rng(13);
  auto x = random_image(rng, 3, 8, 8);
  const auto e = color_example(x, 4, 4);
  EXPECT_EQ(e.input.shape, (Shape{1, 8, 8}));
  EXPECT_EQ(e.target_shape, (Shape{2, 2}));
  EXPECT_NEAR(e.input.data[9], 0.299 * x.data[9] + 0.587 * x.data[64 + 9] + 0.114 * x.data[128 + 9], 1e-6);
  // majority oracle for block (1, 0)
  std::vector<int> votes(16);
  for (int y = 4; y < 8; ++y)
    for (int xx = 0; xx < 4; ++xx) ++votes[color_class(x.data[y * 8 + xx], x.data[64 + y * 8 + xx], x.data[128 + y * 8 + xx], 4)];
  EXPECT_EQ(e.target[2], std::max_element(votes.begin(), votes.end()) - votes.begin());
  EXPECT_THROW(color_example(x, 1), ContractViolation);
  EXPECT_THROW(color_example(x, 4, 3), ContractViolation);
}

// --- datasets and streams ------------------------------------------------

TEST(Dataset, ImagesOnlyMountDeniesLabels) {
  auto d = make_synthetic_shapes(20, 4, 16, 1);
  EXPECT_NO_THROW((void)d.labeled());
  const auto blind = d.images_only();
  EXPECT_FALSE(blind.has_labels());
  EXPECT_THROW((void)blind.labeled(), LabelAccessDenied);
  EXPECT_EQ(blind.images().size(), 20);
  // the label-free stream cannot be built from a labeled view
  static_assert(!std::is_constructible_v<PretextStream, LabeledView, Task, std::uint64_t, StreamConfig>);
  static_assert(!std::is_convertible_v<ImagesView, LabeledView>);
}

TEST(Dataset, SyntheticDeterministicAndInRange) {
  auto a = make_synthetic_shapes(50, 10, 16, 7), b = make_synthetic_shapes(50, 10, 16, 7);
  for (std::int64_t i = 0; i < 50; ++i) {
    auto x = a.images().image(i), y = b.images().image(i);
    ASSERT_TRUE(std::equal(x.begin(), x.end(), y.begin()));
    for (float v : x) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
    EXPECT_EQ(a.labeled().label(i), b.labeled().label(i));
  }
}

TEST(Dataset, CifarBinaryRoundtrip) {
  auto d = make_synthetic_shapes(7, 10, 32, 3);
  const auto path = (std::filesystem::temp_directory_path() / "unnas_cifar_roundtrip.bin").string();
  ImageSet set{3, 32, 32, {}};
  std::vector<std::int32_t> labels;
  for (std::int64_t i = 0; i < 7; ++i) {
    auto px = d.images().image(i);
    for (float v : px) set.pixels.push_back(std::round(v * 255.0f) / 255.0f);
    labels.push_back(d.labeled().label(i));
  }
  write_cifar10_batch(path, set, labels);
  EXPECT_EQ(std::filesystem::file_size(path), 7u * 3073u);
  const auto back = load_cifar10_batches({path});
  ASSERT_EQ(back.size(), 7);
  for (std::int64_t i = 0; i < 7; ++i) {
    EXPECT_EQ(back.labeled().label(i), labels[i]);
    auto px = back.images().image(i);
    for (std::int64_t k = 0; k < 3072; ++k) ASSERT_NEAR(px[k], set.pixels[i * 3072 + k], 1e-6);
  }
  std::filesystem::resize_file(path, 3073 * 2 + 5);
  EXPECT_THROW(load_cifar10_batches({path}), FormatError);
  std::filesystem::remove(path);
}

TEST(Stream, SameSeedSameFirstBatch) {
  auto d = make_synthetic_shapes(40, 4, 16, 2).images_only();
  StreamConfig cfg;
  cfg.batch_size = 8;
  PretextStream a(d.images(), Task::rot, 5, cfg), b(d.images(), Task::rot, 5, cfg);
  const auto x = a.batch(0, 0), y = b.batch(0, 0);
  EXPECT_EQ(x.inputs.data, y.inputs.data);
  EXPECT_EQ(x.targets, y.targets);
  EXPECT_NE(a.batch(1, 0).inputs.data, x.inputs.data);  // reshuffled next epoch
}

TEST(Stream, ExampleIndependentOfBatching) {
  auto d = make_synthetic_shapes(30, 4, 16, 3).images_only();
  Rng rng(1);
  StreamConfig small, large;
  small.batch_size = 3;
  large.batch_size = 10;
  small.jigsaw = large.jigsaw = jigsaw_permutation_set(2, 24, rng);
  PretextStream a(d.images(), Task::jigsaw, 9, small);
  const auto ex = a.example(2, 17);
  PretextStream b(d.images(), Task::jigsaw, 9, large);
  EXPECT_EQ(ex.input.data, b.example(2, 17).input.data);
  EXPECT_EQ(ex.target, b.example(2, 17).target);
}

TEST(Stream, RotationLabelsUniform) {
  auto d = make_synthetic_shapes(2500, 4, 8, 4).images_only();
  StreamConfig cfg;
  cfg.batch_size = 500;
  cfg.augment = false;
  PretextStream s(d.images(), Task::rot, 11, cfg);
  std::array<int, 4> counts{};
  int total = 0;
  for (int epoch = 0; epoch < 4; ++epoch)
    for (std::int64_t b = 0; b < s.batches_per_epoch(); ++b)
      for (auto t : s.batch(epoch, b).targets) {
        ++counts[t];
        ++total;
      }
  ASSERT_EQ(total, 10000);
  const double sigma = std::sqrt(total * 0.25 * 0.75);
  for (int c : counts) EXPECT_LE(std::abs(c - total / 4.0), 3 * sigma);
}

TEST(Stream, ColorTargetsAtQuarterResolution) {
  auto d = make_synthetic_shapes(10, 4, 16, 5).images_only();
  StreamConfig cfg;
  cfg.batch_size = 4;
  PretextStream s(d.images(), Task::color, 1, cfg);
  const auto b = s.batch(0, 1);
  EXPECT_EQ(b.inputs.shape, (Shape{4, 1, 16, 16}));
  EXPECT_EQ(b.target_shape, (Shape{4, 4}));
  EXPECT_EQ(b.targets.size(), 4u * 16u);
  for (auto t : b.targets) EXPECT_LT(t, 64);
  EXPECT_EQ(s.batches_per_epoch(), 2);
}

TEST(Stream, SupervisedTargetsAreLabels) {
  auto d = make_synthetic_shapes(12, 5, 16, 6);
  StreamConfig cfg;
  cfg.batch_size = 12;
  cfg.shuffle = false;
  cfg.augment = false;
  SupervisedStream s(d.labeled(), 1, cfg);
  const auto b = s.batch(0, 0);
  for (std::int64_t i = 0; i < 12; ++i) EXPECT_EQ(b.targets[i], d.labeled().label(i));
}

TEST(Augment, CropFlipKeepsShapeAndPixels) {
  Rng rng(14);
  const auto x = random_image(rng, 3, 8, 8);
  for (int t = 0; t < 20; ++t) {
    const auto y = augment_crop_flip(x, 4, rng);
    EXPECT_EQ(y.shape, x.shape);
  }
  Rng zero(0);
  EXPECT_EQ(augment_crop_flip(x, 0, zero).shape, x.shape);
}

}  // namespace
}  // namespace unnas
