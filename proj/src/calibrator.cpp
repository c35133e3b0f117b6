#include "safevpr/calibrator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <boost/math/special_functions/beta.hpp>

namespace safevpr::calibrator {

namespace {

std::vector<double> sorted_scores(std::span<const ScoredQuery> cal) {
  std::vector<double> s;
  s.reserve(cal.size());
  for (const auto& q : cal) s.push_back(q.score);
  std::sort(s.begin(), s.end());
  return s;
}

std::vector<double> quantiles_at(std::vector<double> sorted, int divisions) {
  std::vector<double> out;
  for (int k = 1; k < divisions; ++k) {
    out.push_back(empirical_quantile(sorted, static_cast<double>(k) / static_cast<double>(divisions)));
  }
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

double binomial_cdf(std::size_t k, std::size_t n, double p) {
  if (k >= n) return 1.0;
  if (p <= 0.0) return 1.0;
  if (p >= 1.0) return 0.0;
  // P[X <= k] = 1 - I_p(k + 1, n - k), taken from the complement to keep precision for small p.
  return boost::math::ibetac(static_cast<double>(k) + 1.0, static_cast<double>(n - k), p);
}

double clopper_pearson_upper(std::size_t failures, std::size_t trials, double delta_prime) {
  if (trials < 1) throw ConfigError("Clopper-Pearson bound needs at least one trial");
  if (failures > trials) throw ConfigError("failures exceed trials");
  if (!(delta_prime > 0.0 && delta_prime < 1.0)) throw ConfigError("confidence complement must lie in (0,1)");

  if (failures == trials) return 1.0;
  if (failures == 0) return -std::expm1(std::log(delta_prime) / static_cast<double>(trials));

  return boost::math::ibetac_inv(static_cast<double>(failures) + 1.0, static_cast<double>(trials - failures),
                                 delta_prime);
}

double empirical_quantile(std::span<const double> sorted, double level) {
  if (sorted.empty()) throw ConfigError("quantile of an empty sample");
  const double h = static_cast<double>(sorted.size() - 1) * level;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = h - static_cast<double>(lo);
  const double v = sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
  return std::clamp(v, sorted[lo], sorted[lo + 1]);
}

GridSpec build_grid(std::span<const double> scores, int grid_size) {
  if (scores.empty()) throw ConfigError("cannot build a threshold grid from no scores");
  if (grid_size < 1) throw ConfigError("grid size must be >= 1");
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  return GridSpec{quantiles_at(std::move(sorted), grid_size + 1)};
}

std::optional<double> fdr_bound_at(std::span<const ScoredQuery> cal, double tau, double delta_prime) {
  std::size_t accepted = 0;
  std::size_t false_accepts = 0;
  for (const auto& q : cal) {
    if (q.score >= tau) {
      ++accepted;
      if (q.label == 0) ++false_accepts;
    }
  }
  if (accepted == 0) return std::nullopt;
  return clopper_pearson_upper(false_accepts, accepted, delta_prime);
}

LttFit ltt_fit_detailed(std::span<const ScoredQuery> cal, const RiskConfig& cfg, double delta_budget) {
  if (!(delta_budget > 0.0 && delta_budget < 1.0)) throw ConfigError("delta budget must lie in (0,1)");
  LttFit fit;
  fit.per_test_delta = delta_budget;
  if (cal.empty()) return fit;

  std::vector<double> scores;
  scores.reserve(cal.size());
  for (const auto& q : cal) scores.push_back(q.score);
  fit.grid = build_grid(scores, cfg.grid_size);
  fit.per_test_delta = delta_budget / static_cast<double>(fit.grid.candidate_thresholds.size());

  std::size_t best_accepts = 0;
  for (double tau : fit.grid.candidate_thresholds) {
    const auto bound = fdr_bound_at(cal, tau, fit.per_test_delta);
    if (!bound || *bound > cfg.alpha) continue;
    if (cfg.selection == Selection::LargestFeasible) {
      fit.threshold = tau;  // grid is ascending, so the last feasible point wins
      continue;
    }
    const auto accepts = static_cast<std::size_t>(
        std::count_if(cal.begin(), cal.end(), [tau](const ScoredQuery& q) { return q.score >= tau; }));
    if (std::isinf(fit.threshold) || accepts > best_accepts) {
      fit.threshold = tau;
      best_accepts = accepts;
    }
  }
  return fit;
}

double ltt_fit(std::span<const ScoredQuery> cal, const RiskConfig& cfg, double delta_budget) {
  return ltt_fit_detailed(cal, cfg, delta_budget).threshold;
}

bool needs_vanilla_fallback(std::size_t n_cal, const RiskConfig& cfg) {
  return static_cast<double>(n_cal) < 5.0 * static_cast<double>(cfg.bins) / cfg.alpha;
}

std::vector<double> bin_edges(std::span<const double> scores, int bins) {
  if (scores.empty()) throw ConfigError("cannot compute bin edges from no scores");
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  return quantiles_at(std::move(sorted), bins);
}

std::size_t route(std::span<const double> edges, double score) {
  return static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), score) - edges.begin());
}

ThresholdTable vanilla_fit(std::span<const ScoredQuery> cal, const RiskConfig& cfg) {
  cfg.validate();
  if (cal.empty()) throw ConfigError("calibration set is empty");
  const LttFit fit = ltt_fit_detailed(cal, cfg, cfg.delta);
  ThresholdTable table;
  table.mode = TableMode::Vanilla;
  table.thresholds = {fit.threshold};
  table.fit_meta.n_cal = cal.size();
  table.fit_meta.per_test_delta = {fit.per_test_delta};
  return table;
}

ThresholdTable mondrian_fit(std::span<const ScoredQuery> cal, const RiskConfig& cfg) {
  cfg.validate();
  if (cal.empty()) throw ConfigError("calibration set is empty");
  if (needs_vanilla_fallback(cal.size(), cfg)) {
    ThresholdTable table = vanilla_fit(cal, cfg);
    table.fit_meta.fallback_triggered = true;
    return table;
  }

  const std::vector<double> scores = sorted_scores(cal);
  ThresholdTable table;
  table.mode = TableMode::Mondrian;
  table.bin_edges = bin_edges(scores, cfg.bins);
  table.fit_meta.n_cal = cal.size();

  const std::size_t nbins = table.bin_edges.size() + 1;
  std::vector<std::vector<ScoredQuery>> members(nbins);
  for (const auto& q : cal) members[route(table.bin_edges, q.score)].push_back(q);

  // Duplicate edges are merged but the budget keeps the nominal B divisor.
  const double budget = cfg.delta / static_cast<double>(cfg.bins);
  for (const auto& bin : members) {
    const LttFit fit = ltt_fit_detailed(bin, cfg, budget);
    table.thresholds.push_back(fit.threshold);
    table.fit_meta.per_test_delta.push_back(fit.per_test_delta);
  }
  return table;
}

Decision decide(const ThresholdTable& table, double score, std::string query_id) {
  if (table.thresholds.empty()) throw ConfigError("threshold table has no bins");
  Decision d;
  d.query_id = std::move(query_id);
  d.score = score;
  d.routed_bin = std::min(route(table.bin_edges, score), table.thresholds.size() - 1);
  d.threshold_used = table.thresholds.at(d.routed_bin);
  d.accepted = std::isfinite(d.threshold_used) && score >= d.threshold_used;
  return d;
}

}  // namespace safevpr::calibrator
