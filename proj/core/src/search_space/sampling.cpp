#include "unnas/search_space/sampling.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

#include "unnas/error.hpp"

namespace unnas {

Genotype sample_genotype(Rng& rng, int nodes) {
  if (nodes < 1) throw ContractViolation("sample_genotype: nodes must be positive");
  auto cell = [&] {
    CellGenotype c;
    for (int i = 0; i < nodes; ++i) {
      const auto choices = static_cast<std::uint64_t>(i + 2);
      const int a = static_cast<int>(uniform_below(rng, choices));
      int b = static_cast<int>(uniform_below(rng, choices - 1));
      if (b >= a) ++b;
      NodeGene n;
      n.inputs[0] = {kNonZeroOps[uniform_below(rng, kNonZeroOps.size())], a};
      n.inputs[1] = {kNonZeroOps[uniform_below(rng, kNonZeroOps.size())], b};
      c.nodes.push_back(n);
    }
    return c;
  };
  Genotype g;
  g.normal = cell();
  g.reduce = cell();
  g.concat = full_concat(nodes);
  return g;
}

bool CostWindow::contains(const CostStats& c, const CostStats& ref) const {
  auto in = [&](double v, double r) { return v >= lo * r && v <= hi * r; };
  return in(static_cast<double>(c.params), static_cast<double>(ref.params)) &&
         in(static_cast<double>(c.flops), static_cast<double>(ref.flops));
}

FilteredSample sample_filtered(Rng& rng, const Sampler& sampler, const CostFn& cost, const CostWindow& window,
                               const CostStats& reference, std::int64_t max_attempts) {
  if (!(window.lo < window.hi)) throw ContractViolation("sample_filtered: window needs lo < hi");
  if (max_attempts < 1) throw ContractViolation("sample_filtered: attempt budget must be positive");
  for (std::int64_t attempt = 0; attempt < max_attempts; ++attempt) {
    Architecture a = sampler(rng);
    const CostStats c = cost(a);
    if (window.contains(c, reference)) return {std::move(a), c, attempt};
  }
  std::ostringstream os;
  os << "sample_filtered: no acceptance in " << max_attempts << " attempts (acceptance rate 0/" << max_attempts
     << ") for window [" << window.lo << ", " << window.hi << "] of params " << reference.params << ", flops "
     << reference.flops;
  throw SamplingBudgetExceeded(os.str());
}

Pool sample_pool(Rng& rng, int n, const PoolOptions& opts, const CostFn& cost) {
  if (n < 1) throw ContractViolation("sample_pool: n must be positive");
  Sampler sampler = [&opts](Rng& r) -> Architecture {
    if (opts.space == SpaceKind::darts) return sample_genotype(r, opts.nodes);
    return sample_bench_graph(r, opts.bench_vertices);
  };
  Pool pool;
  std::set<std::string> seen;
  while (static_cast<int>(pool.entries.size()) < n) {
    FilteredSample s = opts.window ? sample_filtered(rng, sampler, cost, *opts.window, opts.reference, opts.max_attempts)
                                   : FilteredSample{sampler(rng), {}, 0};
    if (!opts.window) s.cost = cost(s.arch);
    pool.rejections += s.rejections;
    std::string id = arch_id(s.arch);
    if (!seen.insert(id).second) {
      ++pool.duplicates;
      if (pool.duplicates > opts.max_attempts) throw SamplingBudgetExceeded("sample_pool: too many duplicate draws");
      continue;
    }
    pool.entries.push_back({std::move(s.arch), std::move(id), s.cost});
  }
  return pool;
}

std::vector<std::pair<std::size_t, std::size_t>> decile_bounds(std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> b;
  for (std::size_t d = 0; d < 10; ++d) b.emplace_back(d * n / 10, (d + 1) * n / 10);
  return b;
}

std::vector<ArchRecord> stratified_sample(const std::vector<ArchRecord>& records, const std::string& key, int per_decile,
                                          Rng& rng) {
  if (per_decile < 1) throw ContractViolation("stratified_sample: per_decile must be positive");
  for (const auto& r : records) {
    if (!r.accuracies.contains(key)) throw ContractViolation("stratified_sample: record " + r.arch_id + " lacks " + key);
  }
  std::vector<const ArchRecord*> sorted;
  for (const auto& r : records) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [&](const ArchRecord* a, const ArchRecord* b) {
    const double x = a->accuracies.at(key), y = b->accuracies.at(key);
    return x != y ? x < y : a->arch_id < b->arch_id;
  });
  std::vector<ArchRecord> out;
  for (const auto& [lo, hi] : decile_bounds(sorted.size())) {
    if (hi - lo < static_cast<std::size_t>(per_decile)) {
      throw ContractViolation("stratified_sample: decile has " + std::to_string(hi - lo) + " records, need " +
                              std::to_string(per_decile));
    }
    std::vector<std::size_t> idx(hi - lo);
    std::iota(idx.begin(), idx.end(), lo);
    // partial Fisher-Yates: the first per_decile slots are the draw
    for (std::size_t i = 0; i < static_cast<std::size_t>(per_decile); ++i) {
      const auto j = i + uniform_below(rng, idx.size() - i);
      std::swap(idx[i], idx[j]);
      out.push_back(*sorted[idx[i]]);
    }
  }
  return out;
}

}  // namespace unnas
