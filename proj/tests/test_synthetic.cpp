#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

#include "safevpr/evaluator.hpp"
#include "safevpr/rng.hpp"
#include "safevpr/synthetic.hpp"
#include "safevpr/text.hpp"

using namespace safevpr;
using namespace safevpr::data_io;

namespace {

// One-sample KS distance between draws and a reference CDF.
double ks_to_cdf(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, std::fabs(static_cast<double>(i + 1) / n - f), std::fabs(f - static_cast<double>(i) / n)});
  }
  return d;
}

std::vector<double> draws(const ScoreDistribution& dist, std::size_t n, std::uint64_t seed) {
  std::vector<double> out;
  for (std::size_t i = 0; i < n; ++i) {
    CounterStream rng(seed, i);
    out.push_back(dist.sample(rng));
  }
  return out;
}

// Asymptotic one-sample KS critical value at the 0.1% level.
double ks_critical(std::size_t n) { return 1.9495 / std::sqrt(static_cast<double>(n)); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("Philox4x32-10 known-answer vectors") {
  using B = Philox4x32::Block;
  CHECK(Philox4x32(0)(B{0, 0, 0, 0}) == B{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(Philox4x32(~std::uint64_t{0})(B{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}) ==
        B{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(Philox4x32(0x299f31d0a4093822ULL)(B{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}) ==
        B{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("counter streams are pure functions of seed and stream") {
  CounterStream a(5, 1), b(5, 1), c(5, 2), d(6, 1);
  std::vector<std::uint64_t> va, vb, vc, vd;
  for (int i = 0; i < 16; ++i) {
    va.push_back(a.next_u64());
    vb.push_back(b.next_u64());
    vc.push_back(c.next_u64());
    vd.push_back(d.next_u64());
  }
  CHECK(va == vb);
  CHECK(va != vc);
  CHECK(va != vd);

  // Word layout: block 0 of stream 1 under key 5.
  const auto blk = Philox4x32(5)(Philox4x32::Block{0, 0, 1, 0});
  CHECK(va[0] == ((std::uint64_t{blk[1]} << 32) | blk[0]));
  CHECK(va[1] == ((std::uint64_t{blk[3]} << 32) | blk[2]));
}

TEST_CASE("next_double and next_index ranges") {
  CounterStream rng(1, 0);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const double u = rng.next_double();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const double v = rng.next_open_double();
    CHECK(v > 0.0);
    CHECK(v <= 1.0);
    ++counts[rng.next_index(7)];
  }
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("stream ids separate domains") {
  CHECK(stream_id(StreamDomain::SyntheticCal, 0) != stream_id(StreamDomain::SyntheticTest, 0));
  CHECK(stream_id(StreamDomain::Bootstrap, 7) == ((std::uint64_t{3} << 40) | 7));
}

TEST_CASE("uniform sampler matches its CDF") {
  const auto xs = draws(ScoreDistribution::uniform(0.2, 0.7), 20000, 3);
  CHECK(ks_to_cdf(xs, [](double x) { return std::clamp((x - 0.2) / 0.5, 0.0, 1.0); }) < ks_critical(20000));
}

TEST_CASE("Beta sampler matches its CDF") {
  // Beta(2,2) has CDF 3x^2 - 2x^3; Beta(5,2) has CDF 6x^5 - 5x^6.
  const auto b22 = draws(ScoreDistribution::beta(2, 2), 20000, 4);
  CHECK(ks_to_cdf(b22, [](double x) { return 3 * x * x - 2 * x * x * x; }) < ks_critical(20000));
  const auto b52 = draws(ScoreDistribution::beta(5, 2), 20000, 5);
  CHECK(ks_to_cdf(b52, [](double x) { return 6 * std::pow(x, 5) - 5 * std::pow(x, 6); }) < ks_critical(20000));
  // Shape below one exercises the boosted gamma path; Beta(0.5,1) has CDF sqrt(x).
  const auto small = draws(ScoreDistribution::beta(0.5, 1), 20000, 6);
  CHECK(ks_to_cdf(small, [](double x) { return std::sqrt(x); }) < ks_critical(20000));
}

TEST_CASE("truncated normal sampler matches its CDF") {
  const double mu = 0.8, sigma = 0.2;
  const double lo = normal_cdf((0.0 - mu) / sigma), hi = normal_cdf((1.0 - mu) / sigma);
  const auto xs = draws(ScoreDistribution::truncated_normal(mu, sigma), 20000, 7);
  for (double x : xs) {
    CHECK(x >= 0.0);
    CHECK(x <= 1.0);
  }
  CHECK(ks_to_cdf(xs, [&](double x) { return (normal_cdf((x - mu) / sigma) - lo) / (hi - lo); }) <
        ks_critical(20000));
  CHECK_THROWS_AS(ScoreDistribution::truncated_normal(40.0, 0.01).validate(), ConfigError);
}

TEST_CASE("distribution strings") {
  CHECK(ScoreDistribution::parse("beta:5,2") == ScoreDistribution::beta(5, 2));
  CHECK(ScoreDistribution::parse("tnorm:0.8,0.1") == ScoreDistribution::truncated_normal(0.8, 0.1));
  CHECK(ScoreDistribution::parse("uniform") == ScoreDistribution::uniform());
  CHECK(ScoreDistribution::parse("uniform:0.1,0.3") == ScoreDistribution::uniform(0.1, 0.3));
  CHECK(ScoreDistribution::parse(ScoreDistribution::beta(0.5, 3).to_string()) == ScoreDistribution::beta(0.5, 3));
  for (const char* bad : {"beta", "beta:1", "beta:1,2,3", "beta:-1,2", "gamma:1,2", "uniform:0.5,0.2", "beta:x,1"}) {
    CHECK_THROWS_AS(ScoreDistribution::parse(bad), ConfigError);
  }
}

TEST_CASE("generator output is reproducible and well formed") {
  SyntheticSpec spec;
  spec.n_cal = 300;
  spec.n_test = 200;
  spec.seed = 12;
  spec.pose_threshold_m = 25.0;
  spec.test_condition = "night";
  const auto a = generate_synthetic(spec);
  const auto b = generate_synthetic(spec);
  REQUIRE(a.cal.size() == 300);
  REQUIRE(a.test.size() == 200);
  CHECK(a.cal.front().query_id == "cal_000000");
  CHECK(a.test.back().query_id == "test_000199");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < a.cal.size(); ++i) {
    CHECK(a.cal[i].score == b.cal[i].score);
    CHECK(a.cal[i].label == b.cal[i].label);
    CHECK(a.cal[i].condition == "synthetic");
    CHECK((*a.cal[i].pose_error_m <= 25.0) == (a.cal[i].label == 1));
    ids.insert(a.cal[i].query_id);
  }
  for (const auto& q : a.test) CHECK(q.condition == "night");
  CHECK(ids.size() == 300);

  // Calibration records do not depend on how many test records are drawn.
  spec.n_test = 5;
  const auto c = generate_synthetic(spec);
  for (std::size_t i = 0; i < a.cal.size(); ++i) CHECK(c.cal[i].score == a.cal[i].score);

  spec.seed = 13;
  CHECK(generate_synthetic(spec).cal[0].score != a.cal[0].score);
}

TEST_CASE("label rate follows the positive rate") {
  SyntheticSpec spec;
  spec.n_cal = 20000;
  spec.n_test = 0;
  spec.pos_rate = 0.3;
  const auto d = generate_synthetic(spec);
  const auto pos = std::count_if(d.cal.begin(), d.cal.end(), [](const ScoredQuery& q) { return q.label == 1; });
  // Binomial sd is about 65.
  CHECK(std::abs(static_cast<double>(pos) - 6000.0) < 300.0);
}

TEST_CASE("unshifted calibration and test sides are indistinguishable") {
  SyntheticSpec spec;
  spec.n_cal = 10000;
  spec.n_test = 10000;
  spec.seed = 31;
  const auto d = generate_synthetic(spec);
  std::vector<double> a, b;
  for (const auto& q : d.cal) a.push_back(q.score);
  for (const auto& q : d.test) b.push_back(q.score);
  // Two-sample critical value at 0.1%: 1.9495 * sqrt((n + m) / (n m)).
  CHECK(evaluator::ks_two_sample(a, b) < 1.9495 * std::sqrt(2.0 / 10000.0));
}

TEST_CASE("shift transforms are measurable") {
  SyntheticSpec spec;
  spec.n_cal = 5000;
  spec.n_test = 5000;
  spec.seed = 32;
  spec.shift.power = 3.0;
  auto d = generate_synthetic(spec);
  std::vector<double> a, b;
  for (const auto& q : d.cal) a.push_back(q.score);
  for (const auto& q : d.test) b.push_back(q.score);
  CHECK(evaluator::ks_two_sample(a, b) > 0.2);

  // Label flips leave the score distribution alone.
  spec.shift = ShiftSpec{};
  spec.shift.flip_above = 0.75;
  spec.shift.flip_rate = 1.0;
  d = generate_synthetic(spec);
  for (const auto& q : d.test) {
    if (q.score >= 0.75) CHECK(q.label == 0);
  }
  spec.shift.flip_rate = 1.5;
  CHECK_THROWS_AS(generate_synthetic(spec), ConfigError);
}

TEST_CASE("text number formatting round trips") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.125, 0.0, -2.5}) {
    CHECK(*text::parse_double(text::format_double(v)) == v);
  }
  CHECK(text::format_double(kAbstain) == "inf");
  CHECK_FALSE(text::parse_double("inf").has_value());
  CHECK_FALSE(text::parse_double("0.5x").has_value());
  CHECK_FALSE(text::parse_double("").has_value());
  CHECK(*text::parse_int("42") == 42);
  CHECK_FALSE(text::parse_int("4.2").has_value());
  CHECK(text::split("a,,b", ',') == std::vector<std::string_view>{"a", "", "b"});
}
