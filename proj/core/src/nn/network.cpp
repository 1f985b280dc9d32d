#include "unnas/nn/network.hpp"

#include <algorithm>

#include "unnas/error.hpp"

namespace unnas::nn {

void NetworkConfig::validate() const {
  if (width <= 0 || depth <= 0 || num_classes <= 0) {
    throw ContractViolation("network config: width, depth and num_classes must be positive");
  }
  if (stem_stride_layers < 1) throw ContractViolation("network config: stem_stride_layers must be >= 1");
  if (stem_multiplier < 1) throw ContractViolation("network config: stem_multiplier must be >= 1");
  if (aux_weight < 0 || aux_weight > 1) throw ContractViolation("network config: aux_weight must be in [0, 1]");
  if (head == HeadKind::pixel && pixel_factor < 1) throw ContractViolation("network config: pixel_factor must be >= 1");
}

std::set<int> reduction_indices(int depth) { return {depth / 3, 2 * depth / 3}; }

template <typename T>
Var<T> network_loss(const NetOutput<T>& out, std::span<const std::int32_t> targets, double aux_weight) {
  Var<T> loss = ops::softmax_cross_entropy(out.logits, targets);
  if (out.aux_logits && aux_weight > 0) {
    loss = ops::add(loss, ops::scale(ops::softmax_cross_entropy(*out.aux_logits, targets), static_cast<T>(aux_weight)));
  }
  return loss;
}

namespace {

Shape batch_of_one(const Shape& image_shape) {
  if (image_shape.size() != 3) throw ContractViolation("cost: image shape must be (C, H, W), got " + shape_str(image_shape));
  return {1, image_shape[0], image_shape[1], image_shape[2]};
}

}  // namespace

// ---------------------------------------------------------------------------
// Stem and head

template <typename T>
Stem<T>::Stem(std::int64_t in_channels, std::int64_t out_channels, int stride_layers, Rng& rng) {
  for (int i = 0; i < stride_layers; ++i) {
    if (i > 0) body_.push(std::make_unique<ReLU<T>>());
    body_.push(std::make_unique<Conv2d<T>>(i == 0 ? in_channels : out_channels, out_channels, 3,
                                           ops::ConvSpec{2, 1, 1, 1}, false, rng));
    body_.push(std::make_unique<BatchNorm2d<T>>(out_channels));
  }
}

template <typename T>
Head<T>::Head(const NetworkConfig& cfg, std::int64_t channels, Rng& rng) : kind_(cfg.head), pixel_factor_(cfg.pixel_factor) {
  if (kind_ == HeadKind::image) {
    fc_ = std::make_unique<Linear<T>>(channels, cfg.num_classes, rng);
  } else {
    pixel_ = std::make_unique<Conv2d<T>>(channels, cfg.num_classes, 1, ops::ConvSpec{}, true, rng);
  }
}

template <typename T>
int Head<T>::upsample_factor(const Shape& feature_shape, const Shape& input_shape) const {
  if (kind_ == HeadKind::image) return 1;
  const std::int64_t target = input_shape.at(2) / pixel_factor_;
  const std::int64_t have = feature_shape.at(2);
  if (target < have || target % have != 0 || input_shape.at(2) % pixel_factor_ != 0) {
    throw ContractViolation("pixel head: feature map of " + std::to_string(have) + " cannot be upsampled to input/" +
                            std::to_string(pixel_factor_) + " = " + std::to_string(target));
  }
  return static_cast<int>(target / have);
}

template <typename T>
Var<T> Head<T>::forward(Var<T> features, const Shape& input_shape, bool training) {
  if (kind_ == HeadKind::image) return fc_->forward(ops::global_avg_pool(features), training);
  const int f = upsample_factor(features.shape(), input_shape);
  return ops::upsample_nearest(pixel_->forward(features, training), f);
}

template <typename T>
void Head<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  if (fc_) fc_->collect_parameters(out);
  if (pixel_) pixel_->collect_parameters(out);
}

template <typename T>
CostStats Head<T>::cost(const Shape& feature_shape) const {
  if (fc_) return fc_->cost({1, feature_shape.at(1)});
  return pixel_->cost(feature_shape);
}

// ---------------------------------------------------------------------------
// Genotype cells

template <typename T>
Cell<T>::Cell(const CellGenotype& genes, const std::vector<int>& concat, std::int64_t c_pp, std::int64_t c_p,
              std::int64_t c, bool reduction, bool reduction_prev, Rng& rng)
    : concat_(concat), c_(c), reduction_(reduction) {
  if (reduction_prev) {
    pre0_ = std::make_unique<FactorizedReduce<T>>(c_pp, c, rng);
  } else {
    pre0_ = relu_conv_bn<T>(c_pp, c, 1, 1, 0, rng);
  }
  pre1_ = relu_conv_bn<T>(c_p, c, 1, 1, 0, rng);
  for (const auto& node : genes.nodes) {
    std::array<Edge, 2> edges;
    for (int k = 0; k < 2; ++k) {
      const auto& e = node.inputs[k];
      const int stride = reduction && e.pred < 2 ? 2 : 1;
      edges[k] = Edge{e.pred, instantiate_op<T>(e.op, c, stride, rng)};
    }
    nodes_.push_back(std::move(edges));
  }
}

template <typename T>
Var<T> Cell<T>::forward(Var<T> s0, Var<T> s1, bool training) {
  std::vector<Var<T>> states{pre0_->forward(s0, training), pre1_->forward(s1, training)};
  for (auto& node : nodes_) {
    Var<T> a = node[0].op->forward(states[node[0].pred], training);
    Var<T> b = node[1].op->forward(states[node[1].pred], training);
    states.push_back(ops::add(a, b));
  }
  std::vector<Var<T>> picked;
  for (int idx : concat_) picked.push_back(states[idx]);
  return ops::concat_channels<T>(picked);
}

template <typename T>
void Cell<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  pre0_->collect_parameters(out);
  pre1_->collect_parameters(out);
  for (auto& node : nodes_)
    for (auto& e : node) e.op->collect_parameters(out);
}

template <typename T>
CostStats Cell<T>::cost(const Shape& s0, const Shape& s1, Shape& out) const {
  CostStats c = pre0_->cost(s0) + pre1_->cost(s1);
  std::vector<Shape> states{pre0_->out_shape(s0), pre1_->out_shape(s1)};
  if (states[0] != states[1]) {
    throw ContractViolation("cell: preprocessed inputs disagree: " + shape_str(states[0]) + " vs " + shape_str(states[1]));
  }
  for (const auto& node : nodes_) {
    Shape sh;
    for (const auto& e : node) {
      c += e.op->cost(states[e.pred]);
      sh = e.op->out_shape(states[e.pred]);
    }
    states.push_back(sh);
  }
  out = states[concat_.front()];
  out[1] = out_channels();
  return c;
}

template <typename T>
GenotypeNetwork<T>::GenotypeNetwork(const Genotype& genotype, const NetworkConfig& config, Rng& rng,
                                    std::int64_t in_channels)
    : config_(config), stem_(in_channels, static_cast<std::int64_t>(config.stem_multiplier) * config.width,
                             config.stem_stride_layers, rng) {
  config_.validate();
  if (auto v = genotype_violation(genotype); !v.empty()) throw ContractViolation("invalid genotype: " + v);
  const auto reductions = reduction_indices(config_.depth);
  std::int64_t c_pp = static_cast<std::int64_t>(config_.stem_multiplier) * config_.width;
  std::int64_t c_p = c_pp, c_curr = config_.width, c_aux = 0;
  bool reduction_prev = false;
  for (int i = 0; i < config_.depth; ++i) {
    const bool reduction = reductions.contains(i);
    if (reduction) c_curr *= 2;
    cells_.push_back(std::make_unique<Cell<T>>(reduction ? genotype.reduce : genotype.normal, genotype.concat, c_pp,
                                               c_p, c_curr, reduction, reduction_prev, rng));
    reduction_prev = reduction;
    c_pp = c_p;
    c_p = cells_.back()->out_channels();
    if (i == aux_index(config_.depth)) c_aux = c_p;
  }
  if (config_.auxiliary && config_.head == HeadKind::image) {
    aux_ = std::make_unique<Linear<T>>(c_aux, config_.num_classes, rng);
  }
  head_ = std::make_unique<Head<T>>(config_, c_p, rng);
}

template <typename T>
NetOutput<T> GenotypeNetwork<T>::forward(Var<T> x, bool training) {
  Var<T> s0 = stem_.forward(x, training);
  Var<T> s1 = s0;
  NetOutput<T> out;
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    Var<T> s = cells_[i]->forward(s0, s1, training);
    s0 = s1;
    s1 = s;
    if (aux_ && training && static_cast<int>(i) == aux_index(config_.depth)) {
      out.aux_logits = aux_->forward(ops::global_avg_pool(ops::relu(s1)), training);
    }
  }
  out.logits = head_->forward(s1, x.shape(), training);
  return out;
}

template <typename T>
std::vector<Parameter<T>*> GenotypeNetwork<T>::parameters() {
  std::vector<Parameter<T>*> out;
  stem_.collect_parameters(out);
  for (auto& c : cells_) c->collect_parameters(out);
  if (aux_) aux_->collect_parameters(out);
  head_->collect_parameters(out);
  return out;
}

template <typename T>
CostStats GenotypeNetwork<T>::cost(const Shape& image_shape) const {
  const Shape in = batch_of_one(image_shape);
  CostStats c = stem_.cost(in);
  Shape s0 = stem_.out_shape(in), s1 = s0;
  for (const auto& cell : cells_) {
    Shape out;
    c += cell->cost(s0, s1, out);
    s0 = s1;
    s1 = out;
  }
  (void)head_->upsample_factor(s1, in);  // throws on pixel-head geometry mismatch
  return c + head_->cost(s1);
}

// ---------------------------------------------------------------------------
// Benchmark-space network

namespace {

template <typename T>
ModulePtr<T> conv_bn_relu(std::int64_t cin, std::int64_t cout, int k, Rng& rng) {
  auto seq = std::make_unique<Sequential<T>>();
  seq->push(std::make_unique<Conv2d<T>>(cin, cout, k, ops::ConvSpec{1, k / 2, 1, 1}, false, rng));
  seq->push(std::make_unique<BatchNorm2d<T>>(cout));
  seq->push(std::make_unique<ReLU<T>>());
  return seq;
}

}  // namespace

template <typename T>
BenchNetwork<T>::BenchNetwork(const BenchGraph& graph, const NetworkConfig& config, Rng& rng, std::int64_t in_channels)
    : config_(config) {
  config_.validate();
  if (!bench_validate(graph)) throw ContractViolation("invalid benchmark graph");
  const BenchGraph g = bench_prune(graph);
  const int n = g.n_vertices;
  for (int i = 0; i < config_.stem_stride_layers; ++i) {
    if (i > 0) stem_.push(std::make_unique<ReLU<T>>());
    stem_.push(std::make_unique<Conv2d<T>>(i == 0 ? in_channels : config_.width, config_.width, 3,
                                           ops::ConvSpec{2, 1, 1, 1}, false, rng));
    stem_.push(std::make_unique<BatchNorm2d<T>>(config_.width));
  }
  stem_.push(std::make_unique<ReLU<T>>());
  std::int64_t c_prev = config_.width;
  int prev_stack = 0;
  for (int i = 0; i < config_.depth; ++i) {
    const int stack = std::min(2, i * 3 / config_.depth);
    downsample_before_.push_back(i > 0 && stack != prev_stack);
    prev_stack = stack;
    const std::int64_t c = static_cast<std::int64_t>(config_.width) << stack;
    BenchCell cell;
    cell.graph = g;
    cell.vertex_ops.resize(static_cast<std::size_t>(n));
    cell.input_proj.resize(static_cast<std::size_t>(n));
    for (int v = 1; v < n; ++v) {
      if (g.edge(0, v)) cell.input_proj[v] = conv_bn_relu<T>(c_prev, c, 1, rng);
      if (v == n - 1) break;
      switch (g.ops[v]) {
        case BenchOp::conv3x3: cell.vertex_ops[v] = conv_bn_relu<T>(c, c, 3, rng); break;
        case BenchOp::conv1x1: cell.vertex_ops[v] = conv_bn_relu<T>(c, c, 1, rng); break;
        case BenchOp::maxpool3x3: cell.vertex_ops[v] = std::make_unique<Pool2d<T>>(PoolKind::max, 3, 1, 1); break;
        default: throw ContractViolation("benchmark cell: bad interior op");
      }
    }
    cells_.push_back(std::move(cell));
    c_prev = c;
  }
  head_ = std::make_unique<Head<T>>(config_, c_prev, rng);
}

template <typename T>
Var<T> BenchNetwork<T>::cell_forward(BenchCell& cell, Var<T> x, bool training) {
  const BenchGraph& g = cell.graph;
  const int n = g.n_vertices;
  std::vector<Var<T>> states(static_cast<std::size_t>(n));
  auto gather = [&](int v) {
    std::vector<Var<T>> ins;
    for (int u = 0; u < v; ++u) {
      if (!g.edge(u, v)) continue;
      ins.push_back(u == 0 ? cell.input_proj[v]->forward(x, training) : states[u]);
    }
    return ins.size() == 1 ? ins.front() : ops::add_n<T>(ins);
  };
  for (int v = 1; v + 1 < n; ++v) states[v] = cell.vertex_ops[v]->forward(gather(v), training);
  return gather(n - 1);
}

template <typename T>
NetOutput<T> BenchNetwork<T>::forward(Var<T> x, bool training) {
  Var<T> h = stem_.forward(x, training);
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    if (downsample_before_[i]) h = ops::max_pool2d(h, 2, 2, 0);
    h = cell_forward(cells_[i], h, training);
  }
  return {head_->forward(h, x.shape(), training), std::nullopt};
}

template <typename T>
std::vector<Parameter<T>*> BenchNetwork<T>::parameters() {
  std::vector<Parameter<T>*> out;
  stem_.collect_parameters(out);
  for (auto& cell : cells_) {
    for (auto& m : cell.input_proj)
      if (m) m->collect_parameters(out);
    for (auto& m : cell.vertex_ops)
      if (m) m->collect_parameters(out);
  }
  head_->collect_parameters(out);
  return out;
}

template <typename T>
CostStats BenchNetwork<T>::cell_cost(const BenchCell& cell, const Shape& in, Shape& out) const {
  const BenchGraph& g = cell.graph;
  CostStats c;
  for (int v = 1; v < g.n_vertices; ++v) {
    if (cell.input_proj[v]) {
      c += cell.input_proj[v]->cost(in);
      out = cell.input_proj[v]->out_shape(in);
    }
  }
  // Every vertex in the cell shares the projected shape.
  if (out.empty()) throw ContractViolation("benchmark cell: no input projection");
  for (int v = 1; v + 1 < g.n_vertices; ++v) c += cell.vertex_ops[v]->cost(out);
  return c;
}

template <typename T>
CostStats BenchNetwork<T>::cost(const Shape& image_shape) const {
  const Shape in = batch_of_one(image_shape);
  CostStats c = stem_.cost(in);
  Shape h = stem_.out_shape(in);
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    if (downsample_before_[i]) h = {h[0], h[1], (h[2] - 2) / 2 + 1, (h[3] - 2) / 2 + 1};
    Shape out;
    c += cell_cost(cells_[i], h, out);
    h = out;
  }
  (void)head_->upsample_factor(h, in);  // throws on pixel-head geometry mismatch
  return c + head_->cost(h);
}

// ---------------------------------------------------------------------------
// Reference cost

CostStats resnet_cifar_cost(int blocks_per_stage, int width, int num_classes, const Shape& image_shape,
                            int stem_stride_layers) {
  const Shape in = batch_of_one(image_shape);
  const ops::ConvSpec s2{2, 1, 1, 1};
  std::int64_t c = in[1], h = in[2], w = in[3];
  CostStats cost;
  for (int i = 0; i < stem_stride_layers; ++i) {
    h = ops::conv_out_extent(h, 3, s2);
    w = ops::conv_out_extent(w, 3, s2);
    cost += conv_cost(c, width, 3, h, w) + batch_norm_cost(width);
    c = width;
  }
  for (int stage = 0; stage < 3; ++stage) {
    const std::int64_t cout = static_cast<std::int64_t>(width) << stage;
    for (int b = 0; b < blocks_per_stage; ++b) {
      if (stage > 0 && b == 0) {
        h = ops::conv_out_extent(h, 3, s2);
        w = ops::conv_out_extent(w, 3, s2);
      }
      cost += conv_cost(c, cout, 3, h, w) + batch_norm_cost(cout);
      cost += conv_cost(cout, cout, 3, h, w) + batch_norm_cost(cout);
      c = cout;
    }
  }
  return cost + linear_cost(c, num_classes);
}

template <typename T>
std::unique_ptr<Model<T>> make_model(const Architecture& arch, const NetworkConfig& config, Rng& rng,
                                     std::int64_t in_channels) {
  if (const auto* g = std::get_if<Genotype>(&arch)) {
    return std::make_unique<GenotypeNetwork<T>>(*g, config, rng, in_channels);
  }
  return std::make_unique<BenchNetwork<T>>(std::get<BenchGraph>(arch), config, rng, in_channels);
}

CostStats architecture_cost(const Architecture& arch, const NetworkConfig& config, const Shape& image_shape) {
  Rng rng(0);
  return make_model<float>(arch, config, rng, image_shape.at(0))->cost(image_shape);
}

template std::unique_ptr<Model<float>> make_model<float>(const Architecture&, const NetworkConfig&, Rng&, std::int64_t);
template std::unique_ptr<Model<double>> make_model<double>(const Architecture&, const NetworkConfig&, Rng&,
                                                           std::int64_t);
template Var<float> network_loss<float>(const NetOutput<float>&, std::span<const std::int32_t>, double);
template Var<double> network_loss<double>(const NetOutput<double>&, std::span<const std::int32_t>, double);
template class Stem<float>;
template class Stem<double>;
template class Head<float>;
template class Head<double>;
template class Cell<float>;
template class Cell<double>;
template class GenotypeNetwork<float>;
template class GenotypeNetwork<double>;
template class BenchNetwork<float>;
template class BenchNetwork<double>;

}  // namespace unnas::nn
