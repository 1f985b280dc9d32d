#pragma once

#include <array>
#include <string>
#include <vector>

#include "unnas/nn/op_kind.hpp"

namespace unnas {

/// One incoming edge of a cell node. Predecessors 0 and 1 are the cell inputs;
/// predecessor p >= 2 is intermediate node p - 2.
struct EdgeGene {
  OpKind op = OpKind::skip_connect;
  int pred = 0;

  friend bool operator==(const EdgeGene&, const EdgeGene&) = default;
};

struct NodeGene {
  std::array<EdgeGene, 2> inputs;

  friend bool operator==(const NodeGene&, const NodeGene&) = default;
};

struct CellGenotype {
  std::vector<NodeGene> nodes;

  friend bool operator==(const CellGenotype&, const CellGenotype&) = default;
};

/// Discrete normal/reduce cell pair. `concat` lists the state indices (>= 2)
/// whose outputs are concatenated into the cell output.
struct Genotype {
  CellGenotype normal;
  CellGenotype reduce;
  std::vector<int> concat;

  [[nodiscard]] int num_nodes() const { return static_cast<int>(normal.nodes.size()); }

  friend bool operator==(const Genotype&, const Genotype&) = default;
};

/// Empty string when valid, otherwise the first violated invariant.
std::string genotype_violation(const Genotype& g);
inline bool is_valid(const Genotype& g) { return genotype_violation(g).empty(); }

/// Concat of every intermediate node, i.e. {2, ..., nodes + 1}.
std::vector<int> full_concat(int nodes);

/// Compact deterministic text form, e.g. "sep_conv_3x3:0,skip_connect:1|...//...".
std::string genotype_key(const Genotype& g);

}  // namespace unnas
