#include "unnas/search_space/bench_graph.hpp"

#include <algorithm>
#include <functional>
#include <cstdint>
#include <cstdio>
#include <numeric>

#include "unnas/error.hpp"

namespace unnas {

std::string_view bench_op_name(BenchOp op) {
  switch (op) {
    case BenchOp::input: return "input";
    case BenchOp::output: return "output";
    case BenchOp::conv3x3: return "conv3x3";
    case BenchOp::conv1x1: return "conv1x1";
    case BenchOp::maxpool3x3: return "maxpool3x3";
  }
  throw ContractViolation("bench_op_name: unknown op");
}

BenchOp bench_op_from_name(std::string_view name) {
  for (auto op : {BenchOp::input, BenchOp::output, BenchOp::conv3x3, BenchOp::conv1x1, BenchOp::maxpool3x3}) {
    if (bench_op_name(op) == name) return op;
  }
  throw ContractViolation("unknown benchmark op '" + std::string(name) + "'");
}

BenchGraph::BenchGraph(std::vector<std::vector<bool>> adj, std::vector<BenchOp> vertex_ops)
    : n_vertices(static_cast<int>(vertex_ops.size())), adjacency(std::move(adj)), ops(std::move(vertex_ops)) {
  if (adjacency.size() != ops.size()) throw ContractViolation("BenchGraph: adjacency/ops size mismatch");
  for (const auto& row : adjacency) {
    if (row.size() != ops.size()) throw ContractViolation("BenchGraph: adjacency must be square");
  }
}

int BenchGraph::num_edges() const {
  int e = 0;
  for (const auto& row : adjacency) e += static_cast<int>(std::count(row.begin(), row.end(), true));
  return e;
}

namespace {

std::vector<bool> reach(const BenchGraph& g, int start, bool forward) {
  std::vector<bool> seen(static_cast<std::size_t>(g.n_vertices), false);
  std::vector<int> stack{start};
  seen[start] = true;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (int u = 0; u < g.n_vertices; ++u) {
      const bool e = forward ? g.adjacency[v][u] : g.adjacency[u][v];
      if (e && !seen[u]) {
        seen[u] = true;
        stack.push_back(u);
      }
    }
  }
  return seen;
}

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  return h * 0xff51afd7ed558ccdULL;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Serialization of g with vertex order `order` (order[i] = old vertex placed at i).
std::string encode(const BenchGraph& g, const std::vector<int>& order) {
  std::string s;
  s.reserve(static_cast<std::size_t>(g.n_vertices * (g.n_vertices + 1)));
  for (int v : order) s.push_back(static_cast<char>('a' + static_cast<int>(g.ops[v])));
  for (int i : order)
    for (int j : order) s.push_back(g.adjacency[i][j] ? '1' : '0');
  return s;
}

}  // namespace

BenchGraph bench_prune(const BenchGraph& g) {
  if (g.n_vertices < 2) return {};
  const auto fwd = reach(g, 0, true);
  const auto bwd = reach(g, g.n_vertices - 1, false);
  if (!fwd[g.n_vertices - 1]) return {};
  std::vector<int> keep;
  for (int v = 0; v < g.n_vertices; ++v) {
    if (fwd[v] && bwd[v]) keep.push_back(v);
  }
  std::vector<std::vector<bool>> adj(keep.size(), std::vector<bool>(keep.size(), false));
  std::vector<BenchOp> ops;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    ops.push_back(g.ops[keep[i]]);
    for (std::size_t j = 0; j < keep.size(); ++j) adj[i][j] = g.adjacency[keep[i]][keep[j]];
  }
  return BenchGraph(std::move(adj), std::move(ops));
}

bool bench_validate(const BenchGraph& g) {
  const int n = g.n_vertices;
  if (n < 2 || n > kBenchMaxVertices) return false;
  if (static_cast<int>(g.adjacency.size()) != n || static_cast<int>(g.ops.size()) != n) return false;
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(g.adjacency[i].size()) != n) return false;
    for (int j = 0; j <= i; ++j) {
      if (g.adjacency[i][j]) return false;
    }
  }
  if (g.ops.front() != BenchOp::input || g.ops.back() != BenchOp::output) return false;
  for (int v = 1; v + 1 < n; ++v) {
    if (g.ops[v] == BenchOp::input || g.ops[v] == BenchOp::output) return false;
  }
  if (g.num_edges() > kBenchMaxEdges) return false;
  return bench_prune(g).n_vertices >= 2;
}

std::string bench_canonical_hash(const BenchGraph& g) {
  const int n = g.n_vertices;
  // Color refinement on (op, in-degree, out-degree, neighbor colors).
  std::vector<std::uint64_t> label(static_cast<std::size_t>(n));
  for (int v = 0; v < n; ++v) {
    int in = 0, out = 0;
    for (int u = 0; u < n; ++u) {
      in += g.adjacency[u][v];
      out += g.adjacency[v][u];
    }
    label[v] = mix(mix(mix(0, static_cast<std::uint64_t>(g.ops[v]) + 1), in), out);
  }
  if (n > 0) {
    label[0] = mix(label[0], 0xA11CE);
    label[n - 1] = mix(label[n - 1], 0xB0B);
  }
  for (int it = 0; it < n; ++it) {
    std::vector<std::uint64_t> next(label.size());
    for (int v = 0; v < n; ++v) {
      std::vector<std::uint64_t> ins, outs;
      for (int u = 0; u < n; ++u) {
        if (g.adjacency[u][v]) ins.push_back(label[u]);
        if (g.adjacency[v][u]) outs.push_back(label[u]);
      }
      std::sort(ins.begin(), ins.end());
      std::sort(outs.begin(), outs.end());
      std::uint64_t h = mix(label[v], 0x1);
      for (auto x : ins) h = mix(h, x);
      h = mix(h, 0x2);
      for (auto x : outs) h = mix(h, x);
      next[v] = h;
    }
    label = std::move(next);
  }

  // Interior vertices sorted by refined color; permute only within color classes.
  std::vector<int> interior;
  for (int v = 1; v + 1 < n; ++v) interior.push_back(v);
  std::sort(interior.begin(), interior.end(), [&](int a, int b) { return label[a] < label[b]; });
  std::vector<std::pair<std::size_t, std::size_t>> classes;
  for (std::size_t i = 0; i < interior.size();) {
    std::size_t j = i;
    while (j < interior.size() && label[interior[j]] == label[interior[i]]) ++j;
    classes.emplace_back(i, j);
    i = j;
  }
  for (auto [b, e] : classes) std::sort(interior.begin() + static_cast<std::ptrdiff_t>(b), interior.begin() + static_cast<std::ptrdiff_t>(e));

  std::string best;
  bool have = false;
  // Odometer over per-class permutations.
  std::vector<int> cur = interior;
  auto visit = [&] {
    std::vector<int> order;
    order.reserve(static_cast<std::size_t>(n));
    if (n > 0) order.push_back(0);
    order.insert(order.end(), cur.begin(), cur.end());
    if (n > 1) order.push_back(n - 1);
    std::string enc = encode(g, order);
    if (!have || enc < best) {
      best = std::move(enc);
      have = true;
    }
  };
  std::function<void(std::size_t)> rec = [&](std::size_t ci) {
    if (ci == classes.size()) {
      visit();
      return;
    }
    auto [b, e] = classes[ci];
    auto first = cur.begin() + static_cast<std::ptrdiff_t>(b), last = cur.begin() + static_cast<std::ptrdiff_t>(e);
    std::sort(first, last);
    do {
      rec(ci + 1);
    } while (std::next_permutation(first, last));
  };
  rec(0);

  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(std::to_string(n) + ":" + best)));
  return buf;
}

BenchGraph bench_permute(const BenchGraph& g, const std::vector<int>& perm) {
  const int n = g.n_vertices;
  if (static_cast<int>(perm.size()) != n) throw ContractViolation("bench_permute: permutation size mismatch");
  if (n > 0 && (perm.front() != 0 || perm.back() != n - 1)) {
    throw ContractViolation("bench_permute: input and output must stay fixed");
  }
  std::vector<std::vector<bool>> adj(static_cast<std::size_t>(n), std::vector<bool>(static_cast<std::size_t>(n), false));
  std::vector<BenchOp> ops(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    ops[perm[i]] = g.ops[i];
    for (int j = 0; j < n; ++j) adj[perm[i]][perm[j]] = g.adjacency[i][j];
  }
  return BenchGraph(std::move(adj), std::move(ops));
}

BenchGraph sample_bench_graph(Rng& rng, int n_vertices) {
  if (n_vertices < 2 || n_vertices > kBenchMaxVertices) {
    throw ContractViolation("sample_bench_graph: vertex count must be in [2, 7]");
  }
  constexpr BenchOp interior_ops[] = {BenchOp::conv3x3, BenchOp::conv1x1, BenchOp::maxpool3x3};
  for (;;) {
    std::vector<std::vector<bool>> adj(static_cast<std::size_t>(n_vertices),
                                       std::vector<bool>(static_cast<std::size_t>(n_vertices), false));
    for (int i = 0; i < n_vertices; ++i)
      for (int j = i + 1; j < n_vertices; ++j) adj[i][j] = uniform_below(rng, 2) == 1;
    std::vector<BenchOp> ops(static_cast<std::size_t>(n_vertices));
    ops.front() = BenchOp::input;
    ops.back() = BenchOp::output;
    for (int v = 1; v + 1 < n_vertices; ++v) ops[v] = interior_ops[uniform_below(rng, 3)];
    BenchGraph g(std::move(adj), std::move(ops));
    if (bench_validate(g)) return g;
  }
}

}  // namespace unnas
