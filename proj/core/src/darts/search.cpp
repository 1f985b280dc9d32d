#include "unnas/darts/search.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "unnas/autograd/ops.hpp"
#include "unnas/error.hpp"
#include "unnas/train/task.hpp"

namespace unnas::darts {

namespace {

constexpr std::int64_t kOps = kNumOpKinds;
constexpr std::uint64_t kSplitTag = 0x73706c6974;
constexpr std::uint64_t kInitTag = 0x696e6974;

template <typename T>
Tensor<T> random_logits(int nodes, Rng& rng) {
  Tensor<T> t({num_edges(nodes), kOps});
  for (auto& v : t.data) v = static_cast<T>(1e-3 * standard_normal(rng));
  return t;
}

template <typename T>
void check_table(const Tensor<T>& t, int nodes, const char* what) {
  if (t.shape != Shape{num_edges(nodes), kOps}) {
    throw ContractViolation(std::string("alpha ") + what + ": expected shape " +
                            shape_str(Shape{num_edges(nodes), kOps}) + ", got " + shape_str(t.shape));
  }
}

template <typename T>
double table_entropy(const Tensor<T>& t) {
  double total = 0;
  const auto rows = t.shape[0];
  for (std::int64_t r = 0; r < rows; ++r) {
    double mx = -INFINITY;
    for (std::int64_t k = 0; k < kOps; ++k) mx = std::max(mx, static_cast<double>(t[r * kOps + k]));
    double z = 0;
    for (std::int64_t k = 0; k < kOps; ++k) z += std::exp(static_cast<double>(t[r * kOps + k]) - mx);
    for (std::int64_t k = 0; k < kOps; ++k) {
      const double p = std::exp(static_cast<double>(t[r * kOps + k]) - mx) / z;
      if (p > 0) total -= p * std::log(p);
    }
  }
  return total;
}

template <typename T>
void set_trainable(const std::vector<Parameter<T>*>& ps, bool on) {
  for (auto* p : ps) p->requires_grad = on;
}

template <typename T>
void require_subset(const std::vector<Parameter<T>*>& reached, const std::vector<Parameter<T>*>& allowed,
                    const char* step) {
  for (auto* p : reached) {
    if (std::find(allowed.begin(), allowed.end(), p) == allowed.end()) {
      throw ContractViolation(std::string(step) + " step reached parameter outside its group: " + p->name);
    }
  }
}

}  // namespace

template <typename T>
AlphaTable<T>::AlphaTable(int n, Rng& rng)
    : nodes(n), normal("alpha_normal", random_logits<T>(n, rng)), reduce("alpha_reduce", random_logits<T>(n, rng)) {}

template <typename T>
AlphaTable<T>::AlphaTable(int n, Tensor<T> normal_logits, Tensor<T> reduce_logits) : nodes(n) {
  check_table(normal_logits, n, "normal");
  check_table(reduce_logits, n, "reduce");
  normal = Parameter<T>("alpha_normal", std::move(normal_logits));
  reduce = Parameter<T>("alpha_reduce", std::move(reduce_logits));
}

template <typename T>
double AlphaTable<T>::mean_entropy() const {
  const auto rows = normal.value.shape[0] + reduce.value.shape[0];
  return (table_entropy(normal.value) + table_entropy(reduce.value)) / static_cast<double>(rows);
}

template <typename T>
Var<T> mixed_op_forward(Var<T> x, Var<T> weights, std::int64_t row, std::span<nn::Module<T>* const> layers,
                        bool training) {
  if (static_cast<std::int64_t>(layers.size()) != weights.shape().back()) {
    throw ContractViolation("mixed op: " + std::to_string(layers.size()) + " layers for " +
                            std::to_string(weights.shape().back()) + " weights");
  }
  std::vector<Var<T>> terms;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    auto* layer = layers[k];
    if (layer == nullptr || dynamic_cast<nn::Zero<T>*>(layer) != nullptr) continue;
    Var<T> y = layer->forward(x, training);
    if (!terms.empty() && y.shape() != terms.front().shape()) {
      throw ContractViolation("mixed op: candidate " + std::to_string(k) + " gives " + shape_str(y.shape()) +
                              ", expected " + shape_str(terms.front().shape()));
    }
    terms.push_back(ops::scale_by(y, weights, row * weights.shape().back() + static_cast<std::int64_t>(k)));
  }
  if (terms.empty()) throw ContractViolation("mixed op: no non-zero candidate");
  return ops::add_n(std::span<const Var<T>>(terms));
}

template <typename T>
SearchCell<T>::SearchCell(int nodes, std::int64_t c_pp, std::int64_t c_p, std::int64_t c, bool reduction,
                          bool reduction_prev, Rng& rng)
    : nodes_(nodes), c_(c), reduction_(reduction) {
  if (nodes < 1) throw ContractViolation("search cell: nodes must be >= 1");
  if (reduction_prev) {
    pre0_ = std::make_unique<nn::FactorizedReduce<T>>(c_pp, c, rng, false);
  } else {
    pre0_ = nn::relu_conv_bn<T>(c_pp, c, 1, 1, 0, rng, false);
  }
  pre1_ = nn::relu_conv_bn<T>(c_p, c, 1, 1, 0, rng, false);
  for (int i = 0; i < nodes; ++i) {
    for (int j = 0; j < i + 2; ++j) {
      const int stride = reduction && j < 2 ? 2 : 1;
      std::vector<nn::ModulePtr<T>> ops;
      for (std::int64_t k = 0; k < kOps; ++k) {
        const auto kind = static_cast<OpKind>(k);
        ops.push_back(kind == OpKind::zero ? nullptr : nn::instantiate_op<T>(kind, c, stride, rng, false));
      }
      edges_.push_back(std::move(ops));
    }
  }
}

template <typename T>
Var<T> SearchCell<T>::forward(Var<T> s0, Var<T> s1, Var<T> weights, bool training) {
  std::vector<Var<T>> states{pre0_->forward(s0, training), pre1_->forward(s1, training)};
  std::vector<nn::Module<T>*> layers(kOps);
  for (int i = 0; i < nodes_; ++i) {
    std::vector<Var<T>> inputs;
    for (int j = 0; j < i + 2; ++j) {
      const int e = edge_index(i, j);
      for (std::int64_t k = 0; k < kOps; ++k) layers[static_cast<std::size_t>(k)] = edges_[e][k].get();
      inputs.push_back(mixed_op_forward<T>(states[j], weights, e, layers, training));
    }
    states.push_back(ops::add_n(std::span<const Var<T>>(inputs)));
  }
  return ops::concat_channels(std::span<const Var<T>>(states.data() + 2, states.size() - 2));
}

template <typename T>
void SearchCell<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  pre0_->collect_parameters(out);
  pre1_->collect_parameters(out);
  for (auto& edge : edges_) {
    for (auto& op : edge) {
      if (op) op->collect_parameters(out);
    }
  }
}

template <typename T>
Supernet<T>::Supernet(int nodes, const nn::NetworkConfig& cfg, std::int64_t in_channels, Rng& rng)
    : cfg_(cfg),
      stem_(in_channels, static_cast<std::int64_t>(cfg.stem_multiplier) * cfg.width, cfg.stem_stride_layers, rng) {
  cfg_.validate();
  const auto reductions = nn::reduction_indices(cfg_.depth);
  std::int64_t c_pp = static_cast<std::int64_t>(cfg_.stem_multiplier) * cfg_.width;
  std::int64_t c_p = c_pp, c_curr = cfg_.width;
  bool reduction_prev = false;
  for (int i = 0; i < cfg_.depth; ++i) {
    const bool reduction = reductions.contains(i);
    if (reduction) c_curr *= 2;
    cells_.push_back(std::make_unique<SearchCell<T>>(nodes, c_pp, c_p, c_curr, reduction, reduction_prev, rng));
    reduction_prev = reduction;
    c_pp = c_p;
    c_p = cells_.back()->out_channels();
  }
  head_ = std::make_unique<nn::Head<T>>(cfg_, c_p, rng);
}

template <typename T>
Var<T> Supernet<T>::forward(Var<T> x, AlphaTable<T>& alpha, bool training) {
  auto& tape = x.tape();
  Var<T> w_normal = ops::softmax_rows(tape.param(alpha.normal));
  Var<T> w_reduce = ops::softmax_rows(tape.param(alpha.reduce));
  Var<T> s0 = stem_.forward(x, training);
  Var<T> s1 = s0;
  for (auto& cell : cells_) {
    Var<T> s = cell->forward(s0, s1, cell->reduction() ? w_reduce : w_normal, training);
    s0 = s1;
    s1 = s;
  }
  return head_->forward(s1, x.shape(), training);
}

template <typename T>
std::vector<Parameter<T>*> Supernet<T>::weights() {
  std::vector<Parameter<T>*> out;
  stem_.collect_parameters(out);
  for (auto& cell : cells_) cell->collect_parameters(out);
  head_->collect_parameters(out);
  return out;
}

void SearchConfig::validate() const {
  auto fail = [](const std::string& m) { throw ContractViolation("search config: " + m); };
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_size < (halve_batch ? 2 : 1)) fail("batch_size too small");
  if (nodes < 1) fail("nodes must be >= 1");
  if (width < 1 || depth < 1) fail("width and depth must be >= 1");
  if (postpone_fraction < 0 || postpone_fraction > 1) fail("postpone_fraction must lie in [0, 1]");
  if (alpha_lr < 0 || w_momentum < 0 || w_weight_decay < 0 || alpha_weight_decay < 0) {
    fail("learning rates, momentum and decays must be non-negative");
  }
  if (input_crop < 0) fail("input_crop must be >= 0");
  if (w_schedule.init_lr < 0) fail("w_schedule.init_lr must be non-negative");
  if (w_schedule.warmup_epochs < 0 || w_schedule.warmup_epochs >= epochs) fail("warmup must be in [0, epochs)");
}

bool alpha_update_gate(int epoch, const SearchConfig& cfg) {
  return static_cast<double>(epoch) >= cfg.postpone_fraction * static_cast<double>(cfg.epochs);
}

nlohmann::json metrics_to_json(const EpochMetrics& m) {
  return {{"epoch", m.epoch}, {"w_loss", m.w_loss}, {"a_loss", m.a_loss}, {"entropy_per_edge", m.entropy_per_edge},
          {"lr", m.lr}, {"alpha_updated", m.alpha_updated}};
}

template <typename T>
EpochMetrics search_epoch(SearchState<T>& state, const BatchSource& weight_stream, const BatchSource& alpha_stream,
                          const SearchConfig& cfg, int epoch) {
  Schedule sched = cfg.w_schedule;
  sched.total_epochs = cfg.epochs;
  EpochMetrics m;
  m.epoch = epoch;
  m.lr = cosine_lr(sched, epoch) / (cfg.halve_batch ? 2.0 : 1.0);
  m.alpha_updated = alpha_update_gate(epoch, cfg);

  auto weights = state.net->weights();
  auto alphas = state.alpha.parameters();
  const SgdOptions sgd{m.lr, cfg.w_momentum, cfg.w_weight_decay};
  const AdamOptions adam{cfg.alpha_lr, 0.5, 0.999, 1e-8, cfg.alpha_weight_decay};
  const auto nw = weight_stream.batches_per_epoch();
  const auto na = alpha_stream.batches_per_epoch();
  double w_total = 0, a_total = 0;
  for (std::int64_t b = 0; b < nw; ++b) {
    set_trainable(alphas, false);
    set_trainable(weights, true);
    zero_grad(std::span<Parameter<T>* const>(weights));
    {
      const Batch batch = weight_stream.batch(epoch, b);
      Tape<T> tape;
      Var<T> x = tape.input(tensor_cast<T>(batch.inputs), false);
      Var<T> loss = ops::softmax_cross_entropy(state.net->forward(x, state.alpha, true),
                                               std::span<const std::int32_t>(batch.targets));
      const double value = static_cast<double>(loss.value()[0]);
      if (!std::isfinite(value)) {
        std::ostringstream os;
        os << "search weight loss is not finite at epoch " << epoch << " batch " << b << " (lr " << m.lr << ")";
        throw DivergenceError(os.str());
      }
      require_subset(tape.backward(loss), weights, "weight");
      w_total += value;
    }
    sgd_step(std::span<Parameter<T>* const>(weights), sgd);

    if (!m.alpha_updated) continue;
    set_trainable(weights, false);
    set_trainable(alphas, true);
    zero_grad(std::span<Parameter<T>* const>(alphas));
    {
      const Batch batch = alpha_stream.batch(epoch, b % na);
      Tape<T> tape;
      Var<T> x = tape.input(tensor_cast<T>(batch.inputs), false);
      Var<T> loss = ops::softmax_cross_entropy(state.net->forward(x, state.alpha, true),
                                               std::span<const std::int32_t>(batch.targets));
      const double value = static_cast<double>(loss.value()[0]);
      if (!std::isfinite(value)) {
        std::ostringstream os;
        os << "search alpha loss is not finite at epoch " << epoch << " batch " << b << " (alpha lr "
           << cfg.alpha_lr << ")";
        throw DivergenceError(os.str());
      }
      require_subset(tape.backward(loss), alphas, "alpha");
      a_total += value;
    }
    adam_step(std::span<Parameter<T>* const>(alphas), adam);
  }
  set_trainable(weights, true);
  set_trainable(alphas, true);
  m.w_loss = w_total / static_cast<double>(nw);
  m.a_loss = m.alpha_updated ? a_total / static_cast<double>(nw) : 0.0;
  m.entropy_per_edge = state.alpha.mean_entropy();
  return m;
}

Genotype derive_genotype(const Tensor<double>& normal_logits, const Tensor<double>& reduce_logits, int nodes) {
  check_table(normal_logits, nodes, "normal");
  check_table(reduce_logits, nodes, "reduce");
  auto derive_cell = [nodes](const Tensor<double>& t) {
    CellGenotype cell;
    for (int i = 0; i < nodes; ++i) {
      struct Candidate {
        double strength;
        int best;
        int pred;
      };
      std::vector<Candidate> cands;
      for (int j = 0; j < i + 2; ++j) {
        const auto row = static_cast<std::int64_t>(edge_index(i, j)) * kOps;
        int best = 0;
        for (int k = 1; k < static_cast<int>(kNonZeroOps.size()); ++k) {
          if (t[row + static_cast<int>(kNonZeroOps[k])] > t[row + static_cast<int>(kNonZeroOps[best])]) best = k;
        }
        const double lb = t[row + static_cast<int>(kNonZeroOps[best])];
        double z = 0;
        for (std::int64_t k = 0; k < kOps; ++k) z += std::exp(t[row + k] - lb);
        cands.push_back({1.0 / z, best, j});
      }
      std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        if (a.strength != b.strength) return a.strength > b.strength;
        if (a.best != b.best) return a.best < b.best;
        return a.pred < b.pred;
      });
      NodeGene node;
      for (int s = 0; s < 2; ++s) node.inputs[s] = {kNonZeroOps[cands[s].best], cands[s].pred};
      cell.nodes.push_back(node);
    }
    return cell;
  };
  return Genotype{derive_cell(normal_logits), derive_cell(reduce_logits), full_concat(nodes)};
}

template <typename T>
Genotype derive_genotype(const AlphaTable<T>& alpha) {
  return derive_genotype(tensor_cast<double>(alpha.normal.value), tensor_cast<double>(alpha.reduce.value),
                         alpha.nodes);
}

Dataset mount_for_objective(const Dataset& train_split, Task objective, bool request_labels) {
  if (is_pretext(objective)) {
    if (request_labels) {
      throw LabelAccessDenied("objective " + std::string(task_name(objective)) + " is label-free; labels refused");
    }
    return train_split.images_only();
  }
  if (!train_split.has_labels()) {
    throw LabelAccessDenied("objective supv_cls needs labels but '" + train_split.name() + "' is mounted images-only");
  }
  return train_split;
}

SearchResult run_search(const Dataset& train_split, const SearchConfig& cfg) {
  cfg.validate();
  const Dataset mounted = mount_for_objective(train_split, cfg.objective, false);
  if (mounted.size() < 2) throw ContractViolation("search: need at least 2 images to split");

  const Dataset shuffled = mounted.random_subset(mounted.size(), derive_seed(cfg.seed, kSplitTag));
  const auto half = mounted.size() / 2;
  const Dataset w_half = shuffled.subset(0, half);
  const Dataset a_half = shuffled.subset(half, mounted.size());

  TaskSpec spec{cfg.objective, cfg.color_bins, cfg.color_pool, cfg.jigsaw_grid, cfg.jigsaw_K, cfg.seed};
  StreamConfig sc;
  sc.batch_size = cfg.halve_batch ? cfg.batch_size / 2 : cfg.batch_size;
  sc.augment = cfg.augment;
  sc.crop = cfg.input_crop;
  const auto w_src = make_source(w_half, spec, derive_seed(cfg.seed, 1), sc);
  const auto a_src = make_source(a_half, spec, derive_seed(cfg.seed, 2), sc);

  nn::NetworkConfig base;
  base.width = cfg.width;
  base.depth = cfg.depth;
  base.stem_stride_layers = cfg.stem_stride_layers;
  base.auxiliary = false;
  const auto net_cfg = task_network_config(base, spec, mounted.num_classes());
  const auto in_channels = task_input_channels(spec, mounted.images().image_shape()[0]);

  Rng rng(derive_seed(cfg.seed, kInitTag));
  SearchState<float> state;
  state.alpha = AlphaTable<float>(cfg.nodes, rng);
  state.net = std::make_unique<Supernet<float>>(cfg.nodes, net_cfg, in_channels, rng);

  SearchResult result;
  result.initial_entropy = state.alpha.mean_entropy();
  for (int e = 0; e < cfg.epochs; ++e) result.log.push_back(search_epoch(state, *w_src, *a_src, cfg, e));
  result.genotype = derive_genotype(state.alpha);
  result.alpha = std::move(state.alpha);
  return result;
}

template struct AlphaTable<float>;
template struct AlphaTable<double>;
template class SearchCell<float>;
template class SearchCell<double>;
template class Supernet<float>;
template class Supernet<double>;

template Var<float> mixed_op_forward<float>(Var<float>, Var<float>, std::int64_t, std::span<nn::Module<float>* const>,
                                            bool);
template Var<double> mixed_op_forward<double>(Var<double>, Var<double>, std::int64_t,
                                              std::span<nn::Module<double>* const>, bool);
template EpochMetrics search_epoch<float>(SearchState<float>&, const BatchSource&, const BatchSource&,
                                          const SearchConfig&, int);
template EpochMetrics search_epoch<double>(SearchState<double>&, const BatchSource&, const BatchSource&,
                                           const SearchConfig&, int);
template Genotype derive_genotype<float>(const AlphaTable<float>&);
template Genotype derive_genotype<double>(const AlphaTable<double>&);

}  // namespace unnas::darts
