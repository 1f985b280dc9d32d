#pragma once

#include <memory>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "unnas/nn/layers.hpp"
#include "unnas/search_space/architecture.hpp"

namespace unnas::nn {

/// Image-level classifier or per-pixel classifier.
enum class HeadKind { image, pixel };

struct NetworkConfig {
  int width = 16;               // channels of the first stage of cells
  int depth = 8;                // number of cells
  int num_classes = 10;
  int stem_stride_layers = 1;   // stride-2 3x3 convs at the start
  int stem_multiplier = 3;
  bool auxiliary = false;
  double aux_weight = 0.4;
  HeadKind head = HeadKind::image;
  int pixel_factor = 4;         // pixel head predicts at input / pixel_factor

  void validate() const;
};

/// Cells at floor(depth/3) and floor(2*depth/3) halve resolution and double channels.
std::set<int> reduction_indices(int depth);
/// Cell after which the auxiliary head attaches.
inline int aux_index(int depth) { return 2 * depth / 3; }

template <typename T>
struct NetOutput {
  Var<T> logits;
  std::optional<Var<T>> aux_logits;
};

/// Main cross-entropy plus aux_weight times the auxiliary cross-entropy.
template <typename T>
Var<T> network_loss(const NetOutput<T>& out, std::span<const std::int32_t> targets, double aux_weight);

/// Common interface of trainable architectures.
template <typename T>
class Model {
 public:
  virtual ~Model() = default;
  virtual NetOutput<T> forward(Var<T> x, bool training) = 0;
  virtual std::vector<Parameter<T>*> parameters() = 0;
  /// Structure-only cost of the inference path (auxiliary head excluded) for one (C, H, W) image.
  [[nodiscard]] virtual CostStats cost(const Shape& image_shape) const = 0;
  [[nodiscard]] virtual const NetworkConfig& config() const = 0;
};

/// Stem shared by the cell networks: stride-2 conv/BN layers with ReLU in between.
template <typename T>
class Stem {
 public:
  Stem(std::int64_t in_channels, std::int64_t out_channels, int stride_layers, Rng& rng);
  Var<T> forward(Var<T> x, bool training) { return body_.forward(x, training); }
  void collect_parameters(std::vector<Parameter<T>*>& out) { body_.collect_parameters(out); }
  [[nodiscard]] Shape out_shape(const Shape& in) const { return body_.out_shape(in); }
  [[nodiscard]] CostStats cost(const Shape& in) const { return body_.cost(in); }

 private:
  Sequential<T> body_;
};

/// Classification or pixel head over the last feature map.
template <typename T>
class Head {
 public:
  Head(const NetworkConfig& cfg, std::int64_t channels, Rng& rng);
  Var<T> forward(Var<T> features, const Shape& input_shape, bool training);
  void collect_parameters(std::vector<Parameter<T>*>& out);
  [[nodiscard]] CostStats cost(const Shape& feature_shape) const;
  /// Spatial upsampling applied by a pixel head (1 for image heads).
  [[nodiscard]] int upsample_factor(const Shape& feature_shape, const Shape& input_shape) const;

 private:
  HeadKind kind_;
  int pixel_factor_;
  std::unique_ptr<Linear<T>> fc_;
  std::unique_ptr<Conv2d<T>> pixel_;
};

/// Discrete cell built from one half of a genotype.
template <typename T>
class Cell {
 public:
  Cell(const CellGenotype& genes, const std::vector<int>& concat, std::int64_t c_pp, std::int64_t c_p, std::int64_t c,
       bool reduction, bool reduction_prev, Rng& rng);
  Var<T> forward(Var<T> s0, Var<T> s1, bool training);
  void collect_parameters(std::vector<Parameter<T>*>& out);
  /// Output shape and cost given the two input shapes.
  CostStats cost(const Shape& s0, const Shape& s1, Shape& out) const;
  [[nodiscard]] std::int64_t out_channels() const { return c_ * static_cast<std::int64_t>(concat_.size()); }
  [[nodiscard]] bool reduction() const { return reduction_; }

 private:
  struct Edge {
    int pred;
    ModulePtr<T> op;
  };
  ModulePtr<T> pre0_, pre1_;
  std::vector<std::array<Edge, 2>> nodes_;
  std::vector<int> concat_;
  std::int64_t c_;
  bool reduction_;
};

/// Network stacked from genotype cells.
template <typename T>
class GenotypeNetwork final : public Model<T> {
 public:
  GenotypeNetwork(const Genotype& genotype, const NetworkConfig& config, Rng& rng, std::int64_t in_channels = 3);
  NetOutput<T> forward(Var<T> x, bool training) override;
  std::vector<Parameter<T>*> parameters() override;
  [[nodiscard]] CostStats cost(const Shape& image_shape) const override;
  [[nodiscard]] const NetworkConfig& config() const override { return config_; }
  [[nodiscard]] const std::vector<std::unique_ptr<Cell<T>>>& cells() const { return cells_; }
  [[nodiscard]] bool has_aux_head() const { return aux_ != nullptr; }

 private:
  NetworkConfig config_;
  Stem<T> stem_;
  std::vector<std::unique_ptr<Cell<T>>> cells_;
  std::unique_ptr<Linear<T>> aux_;
  std::unique_ptr<Head<T>> head_;
};

/// Network stacked from benchmark-space cells: three stacks of depth/3 cells,
/// 2x2 max-pool downsampling between stacks, channels doubling per stack.
template <typename T>
class BenchNetwork final : public Model<T> {
 public:
  BenchNetwork(const BenchGraph& graph, const NetworkConfig& config, Rng& rng, std::int64_t in_channels = 3);
  NetOutput<T> forward(Var<T> x, bool training) override;
  std::vector<Parameter<T>*> parameters() override;
  [[nodiscard]] CostStats cost(const Shape& image_shape) const override;
  [[nodiscard]] const NetworkConfig& config() const override { return config_; }

 private:
  struct BenchCell {
    BenchGraph graph;
    std::vector<ModulePtr<T>> vertex_ops;   // per vertex (interior only)
    std::vector<ModulePtr<T>> input_proj;   // per vertex fed by the input (index by vertex)
  };
  Var<T> cell_forward(BenchCell& cell, Var<T> x, bool training);
  CostStats cell_cost(const BenchCell& cell, const Shape& in, Shape& out) const;

  NetworkConfig config_;
  Sequential<T> stem_;
  std::vector<BenchCell> cells_;
  std::vector<bool> downsample_before_;
  std::unique_ptr<Head<T>> head_;
};

/// Structure-only cost of `model` for one image of `image_shape` (C, H, W).
template <typename T>
CostStats count_cost(const Model<T>& model, const Shape& image_shape) {
  return model.cost(image_shape);
}

/// Cost of the CIFAR-style ResNet-(6n+2) with option-A shortcuts, behind the
/// same stem policy as the cell networks (stem_stride_layers stride-2 convs).
CostStats resnet_cifar_cost(int blocks_per_stage, int width, int num_classes, const Shape& image_shape,
                            int stem_stride_layers);
inline CostStats resnet56_cost(const Shape& image_shape, int num_classes = 10, int stem_stride_layers = 1) {
  return resnet_cifar_cost(9, 16, num_classes, image_shape, stem_stride_layers);
}

/// GenotypeNetwork or BenchNetwork, by architecture kind.
template <typename T>
std::unique_ptr<Model<T>> make_model(const Architecture& arch, const NetworkConfig& config, Rng& rng,
                                     std::int64_t in_channels = 3);

/// Cost of the model `arch` would build, for one (C, H, W) image.
CostStats architecture_cost(const Architecture& arch, const NetworkConfig& config, const Shape& image_shape);

extern template class GenotypeNetwork<float>;
extern template class GenotypeNetwork<double>;
extern template class BenchNetwork<float>;
extern template class BenchNetwork<double>;

}  // namespace unnas::nn
