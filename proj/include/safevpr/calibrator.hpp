#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "safevpr/core.hpp"

namespace safevpr::calibrator {

/// Clopper-Pearson (1 - delta_prime) upper confidence limit on a binomial
/// failure probability after observing `failures` out of `trials`.
///
/// Returns the root p of P[Binomial(trials, p) <= failures] = delta_prime,
/// and exactly 1.0 when failures == trials. Throws ConfigError on invalid ranges.
double clopper_pearson_upper(std::size_t failures, std::size_t trials, double delta_prime);

// Lower tail P[X <= k] for X ~ Binomial(n, p), via the regularized incomplete beta.
double binomial_cdf(std::size_t k, std::size_t n, double p);

// Linearly interpolated empirical quantile of ascending-sorted data
// (order statistic position (n - 1) * level).
double empirical_quantile(std::span<const double> sorted, double level);

struct GridSpec {
  std::vector<double> candidate_thresholds;
};

// Quantiles at levels k / (M + 1), k = 1..M, deduplicated.
GridSpec build_grid(std::span<const double> scores, int grid_size);

// Clopper-Pearson bound on the accept-set false rate at threshold tau;
// nullopt when nothing is accepted.
std::optional<double> fdr_bound_at(std::span<const ScoredQuery> cal, double tau, double delta_prime);

struct LttFit {
  double threshold = kAbstain;
  double per_test_delta = 0.0;
  GridSpec grid;
};

// Bonferroni-corrected Learn-Then-Test over the quantile grid.
LttFit ltt_fit_detailed(std::span<const ScoredQuery> cal, const RiskConfig& cfg, double delta_budget);

// Fitted threshold, or kAbstain when no grid point is feasible.
double ltt_fit(std::span<const ScoredQuery> cal, const RiskConfig& cfg, double delta_budget);

// Smallest calibration size that supports B-way binning at level alpha.
bool needs_vanilla_fallback(std::size_t n_cal, const RiskConfig& cfg);

// B-quantile bin edges of the scores, deduplicated.
std::vector<double> bin_edges(std::span<const double> scores, int bins);

// Index of the bin a score routes to: right-open bins, scores on an edge go up.
std::size_t route(std::span<const double> edges, double score);

ThresholdTable vanilla_fit(std::span<const ScoredQuery> cal, const RiskConfig& cfg);

// Per-bin LTT at budget delta / B; falls back to vanilla LTT below 5B/alpha points.
ThresholdTable mondrian_fit(std::span<const ScoredQuery> cal, const RiskConfig& cfg);

Decision decide(const ThresholdTable& table, double score, std::string query_id = {});

}  // namespace safevpr::calibrator
