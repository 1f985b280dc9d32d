#pragma once

#include <span>
#include <string>
#include <vector>

#include "unnas/rng.hpp"
#include "unnas/search_space/architecture.hpp"

namespace unnas::analysis {

/// 1-based ranks; tied values share the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> v);

struct CorrelationReport {
  double rho = 0;            // NaN when degenerate
  std::size_t n = 0;
  bool degenerate = false;   // a constant input makes rho undefined
  std::vector<double> xs, ys;
};

/// Spearman's rank correlation: Pearson correlation of the average ranks.
/// Requires |xs| == |ys| >= 2 and finite values.
CorrelationReport spearman_rho(std::span<const double> xs, std::span<const double> ys);

struct CurvePoint {
  int m = 0;
  int repeats = 0;        // ceil(n / m)
  double mean = 0;
  double std = 0;         // population std over repeats
  double band = 0;        // 2 * std
};

struct EfficiencyCurve {
  std::size_t n = 0;
  std::vector<CurvePoint> points;
  /// How draws were made; copied into emitted metadata.
  static constexpr const char* kSampling =
      "without replacement within a sample, independent samples across repeats";
};

/// For each m: ceil(n/m) samples of m distinct records (partial Fisher-Yates on
/// a fresh index array, one uniform_below draw per slot), keep the record with
/// the highest `pretext_key` accuracy (ties: lowest arch_id), aggregate its
/// `target_key` accuracy. All sizes share `rng` in order.
EfficiencyCurve efficiency_curve(const std::vector<ArchRecord>& records, const std::string& pretext_key,
                                 const std::string& target_key, const std::vector<int>& sizes, Rng& rng);

struct HuberFit {
  double slope = 0;
  double intercept = 0;
  int iterations = 0;
  double scale = 0;                 // residual scale (MAD / 0.6745 of the least-squares fit)
  std::vector<double> objective;    // Huber loss at the start and after every iteration
};

/// Ordinary least squares; throws ContractViolation when all xs are equal.
std::pair<double, double> ols_fit(std::span<const double> xs, std::span<const double> ys);

/// Minimizes sum huber_c(y - a x - b) with c = delta * scale by iteratively
/// reweighted least squares, stopping when both parameters move by < 1e-10 or
/// after 100 iterations. The scale is estimated once from the least-squares
/// residuals and held fixed.
HuberFit huber_fit(std::span<const double> xs, std::span<const double> ys, double delta = 1.345);

/// sum over i of huber_c(r_i): r^2/2 inside [-c, c], c(|r| - c/2) outside.
double huber_objective(std::span<const double> xs, std::span<const double> ys, double slope, double intercept,
                       double c);

}  // namespace unnas::analysis
