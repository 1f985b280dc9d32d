#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <json.hpp>

#include "unnas/autograd/optim.hpp"
#include "unnas/autograd/schedule.hpp"
#include "unnas/data/dataset.hpp"
#include "unnas/nn/network.hpp"
#include "unnas/pretext/stream.hpp"

namespace unnas::darts {

/// Edges of a cell with `nodes` intermediate nodes: node i has i + 2 inputs.
inline int num_edges(int nodes) { return nodes * (nodes + 3) / 2; }
/// Row of edge (node, pred) in an alpha table.
inline int edge_index(int node, int pred) { return node * (node + 3) / 2 + pred; }

/// Architecture logits, one (edges, 8) table per cell type.
template <typename T>
struct AlphaTable {
  int nodes = 0;
  Parameter<T> normal, reduce;

  AlphaTable() = default;
  /// Small random init (1e-3 * N(0, 1)), as in the usual DARTS setup.
  AlphaTable(int nodes, Rng& rng);
  /// From explicit logits, each of shape (num_edges(nodes), 8).
  AlphaTable(int nodes, Tensor<T> normal_logits, Tensor<T> reduce_logits);

  [[nodiscard]] std::vector<Parameter<T>*> parameters() { return {&normal, &reduce}; }
  /// Mean Shannon entropy (nats) of the per-edge mixture weights over both tables.
  [[nodiscard]] double mean_entropy() const;
};

/// Sum over layers of softmax(weights[row])_k * layer_k(x). A null layer, or a
/// Zero layer, contributes nothing (its weight still takes part in the softmax
/// normalization). All non-null outputs must share a shape.
template <typename T>
Var<T> mixed_op_forward(Var<T> x, Var<T> weights, std::int64_t row, std::span<nn::Module<T>* const> layers,
                        bool training);

/// Continuous relaxation of one cell type: every (node, pred) edge carries all
/// eight candidate ops.
template <typename T>
class SearchCell {
 public:
  SearchCell(int nodes, std::int64_t c_pp, std::int64_t c_p, std::int64_t c, bool reduction, bool reduction_prev,
             Rng& rng);
  Var<T> forward(Var<T> s0, Var<T> s1, Var<T> weights, bool training);
  void collect_parameters(std::vector<Parameter<T>*>& out);
  [[nodiscard]] bool reduction() const { return reduction_; }
  [[nodiscard]] std::int64_t out_channels() const { return c_ * nodes_; }

 private:
  int nodes_;
  std::int64_t c_;
  bool reduction_;
  nn::ModulePtr<T> pre0_, pre1_;
  std::vector<std::vector<nn::ModulePtr<T>>> edges_;  // [edge][op]
};

/// Supernet: stem, depth search cells (reduce cells at depth/3 and 2 depth/3), head.
template <typename T>
class Supernet {
 public:
  Supernet(int nodes, const nn::NetworkConfig& cfg, std::int64_t in_channels, Rng& rng);
  Var<T> forward(Var<T> x, AlphaTable<T>& alpha, bool training);
  [[nodiscard]] std::vector<Parameter<T>*> weights();

 private:
  nn::NetworkConfig cfg_;
  nn::Stem<T> stem_;
  std::vector<std::unique_ptr<SearchCell<T>>> cells_;
  std::unique_ptr<nn::Head<T>> head_;
};

struct SearchConfig {
  int epochs = 10;
  std::int64_t batch_size = 64;
  Schedule w_schedule{0.1, 0, 10};  // total_epochs is overridden by `epochs`
  double w_momentum = 0.9;
  double w_weight_decay = 3e-5;
  double alpha_lr = 3e-4;
  double alpha_weight_decay = 1e-3;
  double postpone_fraction = 0.5;
  int nodes = 2;
  int width = 16;
  int depth = 5;
  int input_crop = 16;
  int stem_stride_layers = 1;
  Task objective = Task::rot;
  std::uint64_t seed = 0;
  bool halve_batch = false;     // divide batch size and weight lr by 2 (memory workaround)
  bool augment = true;
  int color_bins = 8;
  int color_pool = 4;
  int jigsaw_grid = 2;
  int jigsaw_K = 24;

  void validate() const;
};

/// Opens alpha updates once epoch >= postpone_fraction * epochs.
bool alpha_update_gate(int epoch, const SearchConfig& cfg);

struct EpochMetrics {
  int epoch = 0;
  double w_loss = 0;
  double a_loss = 0;            // 0 when the gate was closed
  double entropy_per_edge = 0;  // after the epoch
  double lr = 0;
  bool alpha_updated = false;
};

nlohmann::json metrics_to_json(const EpochMetrics& m);

template <typename T>
struct SearchState {
  std::unique_ptr<Supernet<T>> net;
  AlphaTable<T> alpha;
};

/// One epoch of alternating first-order updates: per batch a weight step on
/// `weight_stream`, then (gate open) an alpha step on `alpha_stream`. Throws
/// DivergenceError on a non-finite loss.
template <typename T>
EpochMetrics search_epoch(SearchState<T>& state, const BatchSource& weight_stream, const BatchSource& alpha_stream,
                          const SearchConfig& cfg, int epoch);

/// Discretization: per node the two incoming edges with the largest non-zero
/// mixture weight (ties: lower best-op index, then lower predecessor), each
/// with its argmax non-zero op (ties: lowest op index). Concat is every node.
Genotype derive_genotype(const Tensor<double>& normal_logits, const Tensor<double>& reduce_logits, int nodes);
template <typename T>
Genotype derive_genotype(const AlphaTable<T>& alpha);

struct SearchResult {
  Genotype genotype;
  std::vector<EpochMetrics> log;
  double initial_entropy = 0;
  AlphaTable<float> alpha;
};

/// Mounts `train_split` for the objective: images-only for label-free
/// objectives (the labeled view is never constructed). Throws
/// LabelAccessDenied when labels are requested for a label-free objective.
Dataset mount_for_objective(const Dataset& train_split, Task objective, bool request_labels);

/// Builds the supernet, splits the training data 50/50 into weight and alpha
/// halves, runs `epochs` search epochs and derives the genotype.
SearchResult run_search(const Dataset& train_split, const SearchConfig& cfg);

extern template struct AlphaTable<float>;
extern template struct AlphaTable<double>;
extern template class SearchCell<float>;
extern template class SearchCell<double>;
extern template class Supernet<float>;
extern template class Supernet<double>;

}  // namespace unnas::darts
