#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "unnas/rng.hpp"
#include "unnas/search_space/architecture.hpp"

namespace unnas {

/// Per node: two distinct predecessors drawn uniformly, ops i.i.d. uniform over
/// the seven non-zero ops. Concat covers every intermediate node.
Genotype sample_genotype(Rng& rng, int nodes = 4);

/// Accept when both params and flops lie in [lo * ref, hi * ref].
struct CostWindow {
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();

  [[nodiscard]] bool contains(const CostStats& c, const CostStats& ref) const;
};

using CostFn = std::function<CostStats(const Architecture&)>;
using Sampler = std::function<Architecture(Rng&)>;

struct FilteredSample {
  Architecture arch;
  CostStats cost;
  std::int64_t rejections = 0;
};

/// Rejection-samples until the cost lands in the window. Throws
/// SamplingBudgetExceeded (with the observed acceptance rate) after
/// `max_attempts` draws.
FilteredSample sample_filtered(Rng& rng, const Sampler& sampler, const CostFn& cost, const CostWindow& window,
                               const CostStats& reference, std::int64_t max_attempts = 10000);

struct PoolOptions {
  SpaceKind space = SpaceKind::darts;
  int nodes = 4;                              // genotype cells
  int bench_vertices = kBenchMaxVertices;
  std::optional<CostWindow> window;           // cost filter relative to `reference`
  CostStats reference;
  std::int64_t max_attempts = 10000;          // per accepted architecture
};

struct PoolEntry {
  Architecture arch;
  std::string id;
  CostStats cost;
};

struct Pool {
  std::vector<PoolEntry> entries;
  std::int64_t rejections = 0;     // out-of-window draws
  std::int64_t duplicates = 0;     // draws resampled because the id was already taken

  [[nodiscard]] double acceptance_rate() const {
    const double accepted = static_cast<double>(entries.size());
    return accepted / (accepted + static_cast<double>(rejections));
  }
};

/// `n` distinct architectures (by arch_id); duplicates are resampled.
Pool sample_pool(Rng& rng, int n, const PoolOptions& opts, const CostFn& cost);

/// Ranks by `key` (ties by arch_id), cuts into 10 equal-count deciles and picks
/// `per_decile` from each uniformly without replacement. Output is ordered by
/// decile, then by draw.
std::vector<ArchRecord> stratified_sample(const std::vector<ArchRecord>& records, const std::string& key, int per_decile,
                                          Rng& rng);

/// Decile d covers sorted positions [floor(d n / 10), floor((d + 1) n / 10)).
std::vector<std::pair<std::size_t, std::size_t>> decile_bounds(std::size_t n);

}  // namespace unnas
