#include "unnas/analysis/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "unnas/error.hpp"

namespace unnas::analysis {

namespace {

void require_pairs(std::span<const double> xs, std::span<const double> ys, std::size_t min_n, const char* who) {
  if (xs.size() != ys.size()) {
    throw ContractViolation(std::string(who) + ": " + std::to_string(xs.size()) + " xs vs " +
                            std::to_string(ys.size()) + " ys");
  }
  if (xs.size() < min_n) throw ContractViolation(std::string(who) + ": need at least " + std::to_string(min_n) + " pairs");
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) {
      throw ContractViolation(std::string(who) + ": non-finite value at index " + std::to_string(i));
    }
  }
}

double median_abs_deviation(std::vector<double> r) {
  auto median = [](std::vector<double>& v) {
    const auto mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double m = v[mid];
    if (v.size() % 2 == 0) m = (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid))) / 2;
    return m;
  };
  const double med = median(r);
  for (auto& v : r) v = std::abs(v - med);
  return median(r);
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

CorrelationReport spearman_rho(std::span<const double> xs, std::span<const double> ys) {
  require_pairs(xs, ys, 2, "spearman_rho");
  CorrelationReport rep;
  rep.n = xs.size();
  rep.xs.assign(xs.begin(), xs.end());
  rep.ys.assign(ys.begin(), ys.end());
  const auto rx = average_ranks(xs), ry = average_ranks(ys);
  // Both rank vectors have mean (n + 1) / 2.
  const double mean = (static_cast<double>(rep.n) + 1.0) / 2.0;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rep.n; ++i) {
    const double dx = rx[i] - mean, dy = ry[i] - mean;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0 || syy == 0) {
    rep.degenerate = true;
    rep.rho = std::numeric_limits<double>::quiet_NaN();
    return rep;
  }
  rep.rho = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  return rep;
}

EfficiencyCurve efficiency_curve(const std::vector<ArchRecord>& records, const std::string& pretext_key,
                                 const std::string& target_key, const std::vector<int>& sizes, Rng& rng) {
  const auto n = records.size();
  if (n == 0) throw ContractViolation("efficiency_curve: no records");
  std::vector<double> pretext(n), target(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& acc = records[i].accuracies;
    auto p = acc.find(pretext_key), t = acc.find(target_key);
    if (p == acc.end() || t == acc.end()) {
      throw ContractViolation("efficiency_curve: record " + records[i].arch_id + " lacks '" +
                              (p == acc.end() ? pretext_key : target_key) + "'");
    }
    pretext[i] = p->second;
    target[i] = t->second;
  }
  EfficiencyCurve curve;
  curve.n = n;
  std::vector<std::size_t> idx(n);
  for (int m : sizes) {
    if (m < 1 || static_cast<std::size_t>(m) > n) {
      throw ContractViolation("efficiency_curve: size " + std::to_string(m) + " outside [1, " + std::to_string(n) + "]");
    }
    CurvePoint pt;
    pt.m = m;
    pt.repeats = static_cast<int>((n + static_cast<std::size_t>(m) - 1) / static_cast<std::size_t>(m));
    std::vector<double> picks;
    for (int r = 0; r < pt.repeats; ++r) {
      std::iota(idx.begin(), idx.end(), 0);
      for (int i = 0; i < m; ++i) {
        const auto j = static_cast<std::size_t>(i) + uniform_below(rng, n - static_cast<std::size_t>(i));
        std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
      }
      std::size_t best = idx[0];
      for (int i = 1; i < m; ++i) {
        const auto c = idx[static_cast<std::size_t>(i)];
        if (pretext[c] > pretext[best] || (pretext[c] == pretext[best] && records[c].arch_id < records[best].arch_id)) {
          best = c;
        }
      }
      picks.push_back(target[best]);
    }
    for (double v : picks) pt.mean += v;
    pt.mean /= static_cast<double>(picks.size());
    for (double v : picks) pt.std += (v - pt.mean) * (v - pt.mean);
    pt.std = std::sqrt(pt.std / static_cast<double>(picks.size()));
    pt.band = 2 * pt.std;
    curve.points.push_back(pt);
  }
  return curve;
}

std::pair<double, double> ols_fit(std::span<const double> xs, std::span<const double> ys) {
  require_pairs(xs, ys, 2, "ols_fit");
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) mx += xs[i], my += ys[i];
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  if (sxx == 0) throw ContractViolation("ols_fit: rank-deficient design (all xs equal)");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

double huber_objective(std::span<const double> xs, std::span<const double> ys, double slope, double intercept,
                       double c) {
  double total = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = std::abs(ys[i] - slope * xs[i] - intercept);
    total += r <= c ? 0.5 * r * r : c * (r - 0.5 * c);
  }
  return total;
}

HuberFit huber_fit(std::span<const double> xs, std::span<const double> ys, double delta) {
  if (!(delta > 0)) throw ContractViolation("huber_fit: delta must be > 0");
  auto [slope, intercept] = ols_fit(xs, ys);
  HuberFit fit;
  std::vector<double> res(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) res[i] = ys[i] - slope * xs[i] - intercept;
  fit.scale = median_abs_deviation(res) / 0.6745;
  fit.slope = slope;
  fit.intercept = intercept;
  if (fit.scale == 0) return fit;   // at least half the points lie on the least-squares line
  const double c = delta * fit.scale;
  fit.objective.push_back(huber_objective(xs, ys, slope, intercept, c));
  for (fit.iterations = 1; fit.iterations <= 100; ++fit.iterations) {
    std::vector<double> w(xs.size());
    double sw = 0, mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double r = std::abs(ys[i] - slope * xs[i] - intercept);
      w[i] = r <= c ? 1.0 : c / r;
      sw += w[i];
      mx += w[i] * xs[i];
      my += w[i] * ys[i];
    }
    mx /= sw;
    my /= sw;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxy += w[i] * (xs[i] - mx) * (ys[i] - my);
      sxx += w[i] * (xs[i] - mx) * (xs[i] - mx);
    }
    if (!(sxx > 0)) throw ContractViolation("huber_fit: weighted design became rank-deficient");
    const double ns = sxy / sxx;
    const double ni = my - ns * mx;
    const bool done = std::abs(ns - slope) < 1e-10 && std::abs(ni - intercept) < 1e-10;
    slope = ns;
    intercept = ni;
    fit.objective.push_back(huber_objective(xs, ys, slope, intercept, c));
    if (done) break;
  }
  fit.iterations = std::min(fit.iterations, 100);
  fit.slope = slope;
  fit.intercept = intercept;
  return fit;
}

}  // namespace unnas::analysis
