#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "safevpr/calibrator.hpp"
#include "safevpr/synthetic.hpp"

using namespace safevpr;
using namespace safevpr::calibrator;

namespace {

std::vector<ScoredQuery> make_cal(const std::vector<std::pair<double, int>>& rows) {
  std::vector<ScoredQuery> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.push_back(ScoredQuery{"q" + std::to_string(i), rows[i].first, rows[i].second, std::nullopt, "c", "b", "d"});
  }
  return out;
}

std::vector<double> scores_of(const std::vector<ScoredQuery>& qs) {
  std::vector<double> out;
  for (const auto& q : qs) out.push_back(q.score);
  return out;
}

std::vector<ScoredQuery> beta_cal(std::size_t n, std::uint64_t seed, double pos_rate = 0.7) {
  data_io::SyntheticSpec spec;
  spec.n_cal = n;
  spec.n_test = 0;
  spec.pos_rate = pos_rate;
  spec.seed = seed;
  return data_io::generate_synthetic(spec).cal;
}

}  // namespace

TEST_CASE("clopper_pearson_upper closed form at zero failures") {
  CHECK(clopper_pearson_upper(0, 10, 0.05) == doctest::Approx(0.25887).epsilon(1e-5));
  CHECK(std::fabs(clopper_pearson_upper(0, 10, 0.05) - (1.0 - std::pow(0.05, 0.1))) < 1e-12);
}

TEST_CASE("clopper_pearson_upper is 1 when every trial failed") {
  for (double d : {0.001, 0.05, 0.5}) CHECK(clopper_pearson_upper(7, 7, d) == 1.0);
}

TEST_CASE("clopper_pearson_upper agrees with bisection on the binomial sum") {
  CHECK(std::fabs(clopper_pearson_upper(1, 20, 0.05) - oracle::clopper_pearson_bisect(1, 20, 0.05)) < 1e-9);
  CHECK(std::fabs(clopper_pearson_upper(2, 20, 0.01) - oracle::clopper_pearson_bisect(2, 20, 0.01)) < 1e-9);
}

TEST_CASE("clopper_pearson_upper rejects invalid ranges") {
  CHECK_THROWS_AS(clopper_pearson_upper(0, 0, 0.05), ConfigError);
  CHECK_THROWS_AS(clopper_pearson_upper(3, 2, 0.05), ConfigError);
  CHECK_THROWS_AS(clopper_pearson_upper(1, 2, 0.0), ConfigError);
  CHECK_THROWS_AS(clopper_pearson_upper(1, 2, 1.0), ConfigError);
}

TEST_CASE("clopper_pearson_upper is a tight inversion of the binomial CDF") {
  for (double dp : {0.002, 0.01, 0.05}) {
    for (std::size_t n = 1; n <= 200; ++n) {
      for (std::size_t k = 0; k < n; ++k) {
        const double p = clopper_pearson_upper(k, n, dp);
        // Evaluated with the direct sum, independent of the implementation's CDF.
        CHECK(oracle::binomial_cdf_direct(k, n, p) <= dp * (1.0 + 1e-9));
        CHECK(oracle::binomial_cdf_direct(k, n, p - 1e-7) > dp);
      }
    }
  }
}

TEST_CASE("binomial_cdf matches the direct sum") {
  for (std::size_t n : {1u, 5u, 37u, 200u}) {
    for (std::size_t k = 0; k <= n; k += 3) {
      for (double p : {0.01, 0.2, 0.5, 0.93}) {
        CHECK(std::fabs(binomial_cdf(k, n, p) - oracle::binomial_cdf_direct(k, n, p)) < 1e-12);
      }
    }
  }
}

TEST_CASE("build_grid uses interpolated quantiles at k/(M+1)") {
  std::vector<double> s;
  for (int i = 1; i <= 10; ++i) s.push_back(0.1 * i);
  const auto g = build_grid(s, 5).candidate_thresholds;
  // (n-1) * k/6 = 1.5k: positions 1.5, 3, 4.5, 6, 7.5 of the sorted sample.
  const std::vector<double> expected{0.25, 0.4, 0.55, 0.7, 0.85};
  REQUIRE(g.size() == expected.size());
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == doctest::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("build_grid deduplicates") {
  CHECK(build_grid(std::vector<double>(20, 0.7), 5).candidate_thresholds == std::vector<double>{0.7});
  CHECK(build_grid(std::vector<double>{0.3}, 5).candidate_thresholds == std::vector<double>{0.3});
  CHECK_THROWS_AS(build_grid(std::vector<double>{}, 5), ConfigError);
}

TEST_CASE("build_grid stays strictly ascending inside the score range") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(1 + trial % 40);
    for (auto& x : s) x = std::round(u(rng) * 8.0) / 8.0;
    const auto g = build_grid(s, 1 + trial % 9).candidate_thresholds;
    CHECK(std::adjacent_find(g.begin(), g.end(), std::greater_equal<>()) == g.end());
    for (double t : g) {
      CHECK(t >= *std::min_element(s.begin(), s.end()));
      CHECK(t <= *std::max_element(s.begin(), s.end()));
    }
  }
}

TEST_CASE("fdr_bound_at") {
  std::vector<std::pair<double, int>> rows;
  for (int i = 0; i < 50; ++i) rows.push_back({0.5 + 0.01 * i, 1});
  const auto cal = make_cal(rows);
  CHECK(*fdr_bound_at(cal, 0.1, 0.01) == clopper_pearson_upper(0, 50, 0.01));
  CHECK_FALSE(fdr_bound_at(cal, 1.5, 0.01).has_value());

  std::vector<std::pair<double, int>> mixed;
  for (int i = 0; i < 20; ++i) mixed.push_back({0.9, i < 2 ? 0 : 1});
  for (int i = 0; i < 30; ++i) mixed.push_back({0.1, 0});
  const double b = *fdr_bound_at(make_cal(mixed), 0.5, 0.01);
  CHECK(std::fabs(b - oracle::clopper_pearson_bisect(2, 20, 0.01)) < 1e-9);
}

TEST_CASE("ltt_fit on cleanly separated scores") {
  std::vector<std::pair<double, int>> rows;
  for (int i = 0; i < 120; ++i) rows.push_back({0.8 + 0.19 * i / 119.0, 1});
  for (int i = 0; i < 80; ++i) rows.push_back({0.79 * i / 79.0, 0});
  const auto cal = make_cal(rows);
  RiskConfig cfg;
  const auto fit = ltt_fit_detailed(cal, cfg, cfg.delta);

  // Exhaustive grid evaluation: the smallest grid point whose bound is <= alpha.
  const auto& grid = fit.grid.candidate_thresholds;
  const double dp = cfg.delta / static_cast<double>(grid.size());
  double expected = kAbstain;
  for (double tau : grid) {
    std::size_t acc = 0, bad = 0;
    for (const auto& q : cal) {
      if (q.score >= tau) {
        ++acc;
        bad += q.label == 0;
      }
    }
    if (acc > 0 && oracle::clopper_pearson_bisect(bad, acc, dp) <= cfg.alpha) {
      expected = tau;
      break;
    }
  }
  CHECK(fit.threshold == expected);
  CHECK(std::isfinite(fit.threshold));
  const double lowest_above = *std::find_if(grid.begin(), grid.end(), [](double t) { return t >= 0.8; });
  CHECK(fit.threshold <= lowest_above);
  CHECK(*fdr_bound_at(cal, fit.threshold, fit.per_test_delta) <= cfg.alpha);
}

TEST_CASE("ltt_fit abstains on uninformative scores") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::pair<double, int>> rows;
  for (int i = 0; i < 400; ++i) rows.push_back({u(rng), i % 2});
  CHECK(std::isinf(ltt_fit(make_cal(rows), RiskConfig{}, 0.05)));
}

TEST_CASE("ltt_fit abstains on a single calibration point") {
  // The only possible bound is 1 - delta' = 0.95 > alpha.
  CHECK(std::isinf(ltt_fit(make_cal({{0.9, 1}}), RiskConfig{}, 0.05)));
}

TEST_CASE("ltt_fit selection switch") {
  std::vector<std::pair<double, int>> rows;
  for (int i = 0; i < 600; ++i) rows.push_back({0.5 + 0.49 * i / 599.0, 1});
  for (int i = 0; i < 400; ++i) rows.push_back({0.49 * i / 399.0, 0});
  const auto cal = make_cal(rows);
  RiskConfig cfg;
  const auto grid = build_grid(scores_of(cal), cfg.grid_size).candidate_thresholds;
  const double dp = cfg.delta / static_cast<double>(grid.size());
  std::vector<double> feasible;
  for (double tau : grid) {
    std::size_t acc = 0, bad = 0;
    for (const auto& q : cal) {
      if (q.score >= tau) {
        ++acc;
        bad += q.label == 0;
      }
    }
    if (acc > 0 && oracle::clopper_pearson_bisect(bad, acc, dp) <= cfg.alpha) feasible.push_back(tau);
  }
  REQUIRE(feasible.size() >= 2);
  CHECK(ltt_fit(cal, cfg, cfg.delta) == feasible.front());
  cfg.selection = Selection::LargestFeasible;
  CHECK(ltt_fit(cal, cfg, cfg.delta) == feasible.back());
}

TEST_CASE("mondrian_fit falls back to vanilla below 5B/alpha") {
  const auto cal = beta_cal(100, 1);
  const auto table = mondrian_fit(cal, RiskConfig{});
  CHECK(table.mode == TableMode::Vanilla);
  CHECK(table.fit_meta.fallback_triggered);
  CHECK(table.bin_edges.empty());
  CHECK(table.thresholds.size() == 1);
  CHECK(table.thresholds[0] == ltt_fit(cal, RiskConfig{}, 0.05));
}

TEST_CASE("fallback boundary is exactly 5B/alpha") {
  CHECK(needs_vanilla_fallback(249, RiskConfig{}));
  CHECK_FALSE(needs_vanilla_fallback(250, RiskConfig{}));
  CHECK(mondrian_fit(beta_cal(249, 3), RiskConfig{}).fit_meta.fallback_triggered);
  CHECK_FALSE(mondrian_fit(beta_cal(250, 3), RiskConfig{}).fit_meta.fallback_triggered);
}

TEST_CASE("mondrian_fit abstains in low bins and accepts in the top bin") {
  const auto cal = beta_cal(500, 77);
  const auto table = mondrian_fit(cal, RiskConfig{});
  CHECK(table.mode == TableMode::Mondrian);
  REQUIRE(table.thresholds.size() == 5);
  CHECK(std::isinf(table.thresholds[0]));
  CHECK(std::isinf(table.thresholds[1]));
  CHECK(std::isfinite(table.thresholds[4]));
  for (double d : table.fit_meta.per_test_delta) CHECK(d <= 0.01);
}

TEST_CASE("mondrian_fit with identical scores collapses to one bin") {
  std::vector<std::pair<double, int>> rows(400, {0.7, 1});
  const auto table = mondrian_fit(make_cal(rows), RiskConfig{});
  CHECK(table.bin_edges == std::vector<double>{0.7});
  REQUIRE(table.thresholds.size() == 2);
  CHECK(std::isinf(table.thresholds[0]));  // empty bin below the single edge
  CHECK(table.thresholds[1] == 0.7);
  CHECK(table.fit_meta.per_test_delta[1] == doctest::Approx(0.05 / 5));
}

TEST_CASE("fitted thresholds satisfy their own bound") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto cal = beta_cal(300 + 50 * seed, seed);
    RiskConfig cfg;
    cfg.alpha = seed % 2 ? 0.05 : 0.10;
    const auto table = mondrian_fit(cal, cfg);
    std::vector<std::vector<ScoredQuery>> members(table.bin_count());
    for (const auto& q : cal) members[route(table.bin_edges, q.score)].push_back(q);
    for (std::size_t b = 0; b < table.bin_count(); ++b) {
      const double t = table.thresholds[b];
      if (std::isinf(t)) continue;
      const auto bound = fdr_bound_at(members[b], t, table.fit_meta.per_test_delta[b]);
      REQUIRE(bound.has_value());
      CHECK(*bound <= cfg.alpha);
    }
  }
}

TEST_CASE("mondrian_fit is deterministic") {
  const auto cal = beta_cal(800, 4);
  CHECK(mondrian_fit(cal, RiskConfig{}) == mondrian_fit(cal, RiskConfig{}));
}

TEST_CASE("stricter delta never lowers a fitted threshold") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto cal = beta_cal(600, 100 + seed);
    double prev_delta = 0.5;
    ThresholdTable prev = mondrian_fit(cal, RiskConfig{0.1, prev_delta});
    for (double delta : {0.2, 0.05, 0.01, 0.001}) {
      const ThresholdTable cur = mondrian_fit(cal, RiskConfig{0.1, delta});
      REQUIRE(cur.bin_edges == prev.bin_edges);
      for (std::size_t b = 0; b < cur.bin_count(); ++b) CHECK(cur.thresholds[b] >= prev.thresholds[b]);
      prev = cur;
    }
  }
}

TEST_CASE("decide routing and inclusive acceptance") {
  ThresholdTable vanilla;
  vanilla.thresholds = {0.4};
  vanilla.fit_meta.per_test_delta = {0.01};
  CHECK(decide(vanilla, 0.4).accepted);
  CHECK_FALSE(decide(vanilla, 0.39).accepted);

  ThresholdTable m;
  m.mode = TableMode::Mondrian;
  m.bin_edges = {0.2, 0.4, 0.6, 0.8};
  m.thresholds = {kAbstain, kAbstain, kAbstain, 0.7, 0.85};
  m.fit_meta.per_test_delta = std::vector<double>(5, 0.002);
  const auto low = decide(m, 0.05);
  CHECK(low.routed_bin == 0);
  CHECK_FALSE(low.accepted);
  CHECK(std::isinf(low.threshold_used));
  CHECK(decide(m, 0.4).routed_bin == 2);  // edge values route up
  CHECK(decide(m, 0.95).routed_bin == 4);
  CHECK(decide(m, 0.95).accepted);
  CHECK_FALSE(decide(m, 0.82).accepted);
  CHECK(decide(m, 0.75).accepted);
}

TEST_CASE("a table that abstains everywhere accepts nothing") {
  ThresholdTable m;
  m.mode = TableMode::Mondrian;
  m.bin_edges = {0.5};
  m.thresholds = {kAbstain, kAbstain};
  CHECK(m.abstains_everywhere());
  for (double s : {0.0, 0.5, 1.0, 7.0}) CHECK_FALSE(decide(m, s).accepted);
}
