#include "unnas/search_space/genotype.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "unnas/error.hpp"

namespace unnas {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::sep_conv_3x3: return "sep_conv_3x3";
    case OpKind::sep_conv_5x5: return "sep_conv_5x5";
    case OpKind::dil_conv_3x3: return "dil_conv_3x3";
    case OpKind::dil_conv_5x5: return "dil_conv_5x5";
    case OpKind::max_pool_3x3: return "max_pool_3x3";
    case OpKind::avg_pool_3x3: return "avg_pool_3x3";
    case OpKind::skip_connect: return "skip_connect";
    case OpKind::zero: return "zero";
  }
  throw ContractViolation("op_name: unknown op kind");
}

OpKind op_from_name(std::string_view name) {
  for (auto k : kAllOps) {
    if (op_name(k) == name) return k;
  }
  throw ContractViolation("unknown op kind '" + std::string(name) + "'");
}

namespace {

std::string cell_violation(const CellGenotype& cell, const char* which) {
  for (std::size_t i = 0; i < cell.nodes.size(); ++i) {
    const auto& node = cell.nodes[i];
    const int max_pred = static_cast<int>(i) + 1;
    for (const auto& e : node.inputs) {
      if (e.pred < 0 || e.pred > max_pred) {
        return std::string(which) + " node " + std::to_string(i) + ": predecessor " + std::to_string(e.pred) +
               " not in [0, " + std::to_string(max_pred) + "]";
      }
      if (e.op == OpKind::zero) return std::string(which) + " node " + std::to_string(i) + ": zero op in genotype";
      if (op_index(e.op) < 0 || op_index(e.op) >= kNumOpKinds) {
        return std::string(which) + " node " + std::to_string(i) + ": invalid op";
      }
    }
    if (node.inputs[0].pred == node.inputs[1].pred) {
      return std::string(which) + " node " + std::to_string(i) + ": duplicate predecessor " +
             std::to_string(node.inputs[0].pred);
    }
  }
  return {};
}

}  // namespace

std::string genotype_violation(const Genotype& g) {
  if (g.normal.nodes.empty()) return "genotype has no nodes";
  if (g.normal.nodes.size() != g.reduce.nodes.size()) return "normal and reduce cells differ in node count";
  if (auto v = cell_violation(g.normal, "normal"); !v.empty()) return v;
  if (auto v = cell_violation(g.reduce, "reduce"); !v.empty()) return v;
  if (g.concat.empty()) return "empty concat";
  for (std::size_t i = 0; i < g.concat.size(); ++i) {
    if (g.concat[i] < 2 || g.concat[i] > g.num_nodes() + 1) return "concat index out of range";
    if (i > 0 && g.concat[i] <= g.concat[i - 1]) return "concat must be strictly increasing";
  }
  return {};
}

std::vector<int> full_concat(int nodes) {
  std::vector<int> c(static_cast<std::size_t>(nodes));
  std::iota(c.begin(), c.end(), 2);
  return c;
}

std::string genotype_key(const Genotype& g) {
  std::ostringstream os;
  auto cell = [&](const CellGenotype& c) {
    for (std::size_t i = 0; i < c.nodes.size(); ++i) {
      if (i) os << '|';
      os << op_name(c.nodes[i].inputs[0].op) << ':' << c.nodes[i].inputs[0].pred << ','
         << op_name(c.nodes[i].inputs[1].op) << ':' << c.nodes[i].inputs[1].pred;
    }
  };
  cell(g.normal);
  os << "//";
  cell(g.reduce);
  os << "//";
  for (std::size_t i = 0; i < g.concat.size(); ++i) os << (i ? "," : "") << g.concat[i];
  return os.str();
}

}  // namespace unnas
