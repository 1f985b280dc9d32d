#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "unnas/error.hpp"
#include "unnas/nn/layers.hpp"
#include "unnas/nn/network.hpp"
#include "unnas/search_space/genotype.hpp"

namespace unnas::nn {
namespace {

using testing::random_tensor;

Genotype simple_genotype(int nodes) {
  Genotype g;
  for (int i = 0; i < nodes; ++i) {
    g.normal.nodes.push_back({{EdgeGene{OpKind::sep_conv_3x3, 0}, EdgeGene{OpKind::skip_connect, i + 1}}});
    g.reduce.nodes.push_back({{EdgeGene{OpKind::max_pool_3x3, 0}, EdgeGene{OpKind::dil_conv_3x3, 1}}});
  }
  g.concat = full_concat(nodes);
  return g;
}

TEST(InstantiateOp, ShapesForEveryKind) {
  Rng rng(1);
  for (OpKind k : kAllOps) {
    for (int stride : {1, 2}) {
      auto op = instantiate_op<float>(k, 8, stride, rng);
      const Shape expect{2, 8, 16 / stride, 16 / stride};
      EXPECT_EQ(op->out_shape({2, 8, 16, 16}), expect) << op_name(k);
      Tape<float> tape;
      Tensor<float> x({2, 8, 16, 16});
      auto y = op->forward(tape.input(x), true);
      EXPECT_EQ(y.shape(), expect) << op_name(k) << " stride " << stride;
    }
  }
}

TEST(InstantiateOp, OddSizesHalveWithCeil) {
  Rng rng(2);
  for (OpKind k : kAllOps) {
    auto op = instantiate_op<float>(k, 4, 2, rng);
    Tape<float> tape;
    auto y = op->forward(tape.input(Tensor<float>({1, 4, 7, 7})), false);
    EXPECT_EQ(y.shape(), (Shape{1, 4, 4, 4})) << op_name(k);
    EXPECT_EQ(op->out_shape({1, 4, 7, 7}), y.shape());
  }
}

TEST(InstantiateOp, SkipIsIdentity) {
  Rng rng(3);
  auto op = instantiate_op<double>(OpKind::skip_connect, 3, 1, rng);
  auto x = random_tensor({2, 3, 5, 5}, rng);
  Tape<double> tape;
  EXPECT_EQ(op->forward(tape.input(x), true).value().data, x.data);
}

TEST(InstantiateOp, ZeroEmitsZerosAndBlocksGradient) {
  Rng rng(4);
  auto op = instantiate_op<double>(OpKind::zero, 3, 1, rng);
  auto x = random_tensor({2, 3, 5, 5}, rng);
  Tape<double> tape;
  auto xv = tape.input(x);
  auto y = op->forward(xv, true);
  for (double v : y.value().data) EXPECT_EQ(v, 0.0);
  tape.backward(ops::sum(ops::add(y, ops::scale(xv, 0.0))));
  for (double g : tape.grad(xv)) EXPECT_EQ(g, 0.0);
  EXPECT_EQ(op->cost({1, 3, 5, 5}), CostStats{});
}

TEST(InstantiateOp, RejectsBadArguments) {
  Rng rng(5);
  EXPECT_THROW(instantiate_op<float>(OpKind::sep_conv_3x3, 0, 1, rng), ContractViolation);
  EXPECT_THROW(instantiate_op<float>(OpKind::sep_conv_3x3, 4, 3, rng), ContractViolation);
  EXPECT_THROW(instantiate_op<float>(static_cast<OpKind>(99), 4, 1, rng), ContractViolation);
}

TEST(InstantiateOp, LayerGradientsMatchFiniteDifferences) {
  for (OpKind k : kNonZeroOps) {
    for (int stride : {1, 2}) {
      Rng rng(6);
      auto op = instantiate_op<double>(k, 2, stride, rng);
      auto r = testing::gradcheck([&](auto&, const auto& v) { return op->forward(v[0], true); },
                                  {random_tensor({2, 2, 5, 5}, rng)});
      EXPECT_LT(r.max_rel_error, 1e-4) << op_name(k) << " stride " << stride;
    }
  }
}

// Brute-force multiply count: one per (output element, tap, input channel in group), padded taps included.
std::int64_t brute_force_macs(std::int64_t cin, std::int64_t cout, int k, std::int64_t ho, std::int64_t wo, int groups) {
  std::int64_t n = 0;
  for (std::int64_t co = 0; co < cout; ++co)
    for (std::int64_t y = 0; y < ho; ++y)
      for (std::int64_t x = 0; x < wo; ++x)
        for (std::int64_t ci = 0; ci < cin / groups; ++ci)
          for (int t = 0; t < k * k; ++t) ++n;
  return n;
}

TEST(Cost, Conv3x3Reference) {
  Rng rng(7);
  Conv2d<float> conv(16, 16, 3, {1, 1, 1, 1}, true, rng);
  const auto c = conv.cost({1, 16, 32, 32});
  EXPECT_EQ(c.params, 2320);
  EXPECT_EQ(c.macs(), 2'359'296);
  EXPECT_EQ(static_cast<std::int64_t>(conv.weight().value.size() + conv.bias()->value.size()), c.params);
}

TEST(Cost, FormulaMatchesBruteForceOnToy) {
  for (int groups : {1, 2, 4}) {
    const auto c = conv_cost(4, 4, 3, 4, 4, groups);
    EXPECT_EQ(c.macs(), brute_force_macs(4, 4, 3, 4, 4, groups));
  }
}

TEST(Cost, SeparableConvUsesTwoFactorDecomposition) {
  Rng rng(8);
  auto op = instantiate_op<float>(OpKind::sep_conv_3x3, 8, 1, rng);
  // two x (depthwise 3x3 + pointwise 1x1 + BN) at 16x16
  const std::int64_t hw = 16 * 16;
  const std::int64_t macs = 2 * (9 * 8 * hw + 8 * 8 * hw);
  const std::int64_t params = 2 * (9 * 8 + 8 * 8 + 2 * 8);
  EXPECT_EQ(op->cost({1, 8, 16, 16}), (CostStats{2 * macs, params}));
}

TEST(Cost, ParamsMatchInstantiatedScalars) {
  Rng rng(9);
  NetworkConfig cfg;
  cfg.width = 8;
  cfg.depth = 5;
  GenotypeNetwork<float> net(simple_genotype(2), cfg, rng);
  std::int64_t scalars = 0;
  for (auto* p : net.parameters()) scalars += static_cast<std::int64_t>(p->value.size());
  EXPECT_EQ(count_cost(net, {3, 16, 16}).params, scalars);
}

TEST(Cost, StructureOnly) {
  NetworkConfig cfg;
  cfg.width = 8;
  cfg.depth = 6;
  Rng r1(1), r2(2);
  GenotypeNetwork<float> a(simple_genotype(3), cfg, r1), b(simple_genotype(3), cfg, r2);
  EXPECT_EQ(count_cost(a, {3, 32, 32}), count_cost(b, {3, 32, 32}));
  EXPECT_GT(count_cost(a, {3, 32, 32}).flops, 0);
}

TEST(Cost, SequentialIsAdditive) {
  Rng rng(10);
  Sequential<float> seq;
  seq.push(std::make_unique<Conv2d<float>>(3, 8, 3, ops::ConvSpec{1, 1, 1, 1}, false, rng));
  seq.push(std::make_unique<BatchNorm2d<float>>(8));
  seq.push(std::make_unique<Conv2d<float>>(8, 4, 1, ops::ConvSpec{2, 0, 1, 1}, true, rng));
  const auto total = seq.cost({1, 3, 8, 8});
  EXPECT_EQ(total, conv_cost(3, 8, 3, 8, 8) + batch_norm_cost(8) + conv_cost(8, 4, 1, 4, 4, 1, true));
}

TEST(Cost, ResNet56Reference) {
  // 3x3 stem + 27 basic blocks + linear: the well-known ~0.85M parameters.
  const auto c = resnet56_cost({3, 32, 32}, 10, 0);
  EXPECT_GT(c.params, 840'000);
  EXPECT_LT(c.params, 870'000);
  EXPECT_GT(c.macs(), 120'000'000);
  EXPECT_LT(c.macs(), 130'000'000);
}

TEST(Network, ReductionIndices) {
  EXPECT_EQ(reduction_indices(12), (std::set<int>{4, 8}));
  EXPECT_EQ(reduction_indices(20), (std::set<int>{6, 13}));
  EXPECT_EQ(reduction_indices(5), (std::set<int>{1, 3}));
}

TEST(Network, ChannelsDoubleAfterReduceCells) {
  Rng rng(11);
  NetworkConfig cfg;
  cfg.width = 4;
  cfg.depth = 6;
  GenotypeNetwork<float> net(simple_genotype(2), cfg, rng);
  std::int64_t c = 4;
  for (std::size_t i = 0; i < net.cells().size(); ++i) {
    if (net.cells()[i]->reduction()) c *= 2;
    EXPECT_EQ(net.cells()[i]->out_channels(), c * 2) << "cell " << i;
  }
}

TEST(Network, SingleHeadWithoutAuxiliary) {
  Rng rng(12);
  NetworkConfig cfg;
  cfg.width = 4;
  cfg.depth = 3;
  GenotypeNetwork<float> net(simple_genotype(2), cfg, rng);
  EXPECT_FALSE(net.has_aux_head());
  Tape<float> tape;
  auto out = net.forward(tape.input(Tensor<float>({2, 3, 16, 16})), true);
  EXPECT_FALSE(out.aux_logits.has_value());
  EXPECT_EQ(out.logits.shape(), (Shape{2, 10}));
}

TEST(Network, AuxiliaryLossCombination) {
  Rng rng(13);
  NetworkConfig cfg;
  cfg.width = 4;
  cfg.depth = 6;
  cfg.auxiliary = true;
  GenotypeNetwork<double> net(simple_genotype(2), cfg, rng);
  ASSERT_TRUE(net.has_aux_head());
  auto x = random_tensor({3, 3, 16, 16}, rng);
  const std::vector<std::int32_t> y{1, 4, 7};
  Tape<double> tape;
  auto out = net.forward(tape.input(x), true);
  ASSERT_TRUE(out.aux_logits.has_value());

  // independent cross-entropy from the raw logits
  auto ce = [&](const Tensor<double>& logits) {
    double total = 0;
    const auto k = logits.shape[1];
    for (std::size_t n = 0; n < y.size(); ++n) {
      double m = -1e300, s = 0;
      for (std::int64_t j = 0; j < k; ++j) m = std::max(m, logits[n * k + j]);
      for (std::int64_t j = 0; j < k; ++j) s += std::exp(logits[n * k + j] - m);
      total += std::log(s) + m - logits[n * k + y[n]];
    }
    return total / static_cast<double>(y.size());
  };
  const double expect = ce(out.logits.value()) + 0.4 * ce(out.aux_logits->value());
  EXPECT_NEAR(network_loss(out, y, 0.4).value()[0], expect, 1e-12);
}

TEST(Network, AuxiliaryBranchOnlyWhileTraining) {
  Rng rng(14);
  NetworkConfig cfg;
  cfg.width = 4;
  cfg.depth = 6;
  cfg.auxiliary = true;
  GenotypeNetwork<float> net(simple_genotype(2), cfg, rng);
  Tape<float> tape(false);
  EXPECT_FALSE(net.forward(tape.input(Tensor<float>({1, 3, 16, 16})), false).aux_logits.has_value());
}

TEST(Network, PixelHeadPredictsAtQuarterResolution) {
  Rng rng(15);
  NetworkConfig cfg;
  cfg.width = 4;
  cfg.depth = 3;
  cfg.num_classes = 16;
  cfg.head = HeadKind::pixel;
  GenotypeNetwork<float> net(simple_genotype(2), cfg, rng, 1);
  Tape<float> tape;
  auto out = net.forward(tape.input(Tensor<float>({2, 1, 16, 16})), true);
  EXPECT_EQ(out.logits.shape(), (Shape{2, 16, 4, 4}));
}

TEST(Network, StemStrideLayersHalveInput) {
  Rng rng(16);
  Stem<float> stem(3, 12, 3, rng);
  EXPECT_EQ(stem.out_shape({1, 3, 64, 64}), (Shape{1, 12, 8, 8}));
}

TEST(Network, InvalidConfigRejected) {
  NetworkConfig cfg;
  cfg.aux_weight = 1.5;
  EXPECT_THROW(cfg.validate(), ContractViolation);
  cfg = {};
  cfg.depth = 0;
  EXPECT_THROW(cfg.validate(), ContractViolation);
}

TEST(Network, InconsistentGenotypeRejected) {
  Rng rng(17);
  Genotype g = simple_genotype(2);
  g.normal.nodes[1].inputs[0].pred = 7;
  EXPECT_THROW(GenotypeNetwork<float>(g, NetworkConfig{}, rng), ContractViolation);
}

TEST(Network, BenchNetworkForward) {
  Rng rng(18);
  NetworkConfig cfg;
  cfg.width = 4;
  cfg.depth = 3;
  const BenchGraph g = sample_bench_graph(rng);
  BenchNetwork<float> net(g, cfg, rng);
  Tape<float> tape;
  auto out = net.forward(tape.input(Tensor<float>({2, 3, 16, 16})), true);
  EXPECT_EQ(out.logits.shape(), (Shape{2, 10}));
  std::int64_t scalars = 0;
  for (auto* p : net.parameters()) scalars += static_cast<std::int64_t>(p->value.size());
  EXPECT_EQ(count_cost(net, {3, 16, 16}).params, scalars);
}

TEST(Network, WholeNetworkInputGradient) {
  Rng rng(19);
  NetworkConfig cfg;
  cfg.width = 2;
  cfg.depth = 3;
  cfg.num_classes = 3;
  GenotypeNetwork<double> net(simple_genotype(1), cfg, rng);
  const std::vector<std::int32_t> y{0, 2};
  auto r = testing::gradcheck(
      [&](auto&, const auto& v) { return network_loss(net.forward(v[0], true), y, 0.4); },
      {random_tensor({2, 3, 8, 8}, rng)});
  EXPECT_LT(r.max_rel_error, 1e-4);
}

}  // namespace
}  // namespace unnas::nn
