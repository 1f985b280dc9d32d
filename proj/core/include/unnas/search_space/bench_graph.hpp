#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "unnas/rng.hpp"

namespace unnas {

// Limits of the benchmark cell space (7 vertices, 9 edges, three interior
// ops). They come from the public definition of the NAS-Bench-101 space and
// are frozen here.
inline constexpr int kBenchMaxVertices = 7;
inline constexpr int kBenchMaxEdges = 9;

enum class BenchOp { input, output, conv3x3, conv1x1, maxpool3x3 };

std::string_view bench_op_name(BenchOp op);
BenchOp bench_op_from_name(std::string_view name);

/// Cell DAG: vertex 0 is the input, the last vertex the output. Only the
/// strict upper triangle of `adjacency` may be set.
struct BenchGraph {
  int n_vertices = 0;
  std::vector<std::vector<bool>> adjacency;
  std::vector<BenchOp> ops;

  BenchGraph() = default;
  BenchGraph(std::vector<std::vector<bool>> adj, std::vector<BenchOp> vertex_ops);

  [[nodiscard]] bool edge(int from, int to) const { return adjacency[from][to]; }
  [[nodiscard]] int num_edges() const;

  friend bool operator==(const BenchGraph&, const BenchGraph&) = default;
};

/// Drops vertices that are not on some input -> output path. When no such path
/// exists the result has zero vertices.
BenchGraph bench_prune(const BenchGraph& g);

/// Vertex/edge limits, triangularity, labels, and an input -> output path.
bool bench_validate(const BenchGraph& g);

/// Same value for every relabeling of the interior vertices; input and output
/// keep their roles. Stable across runs and platforms.
std::string bench_canonical_hash(const BenchGraph& g);

/// Applies `perm` to interior vertices: vertex v moves to position perm[v].
/// perm[0] == 0 and perm[n-1] == n-1 are required.
BenchGraph bench_permute(const BenchGraph& g, const std::vector<int>& perm);

/// Uniform over matrices and ops, resampled until valid.
BenchGraph sample_bench_graph(Rng& rng, int n_vertices = kBenchMaxVertices);

}  // namespace unnas
