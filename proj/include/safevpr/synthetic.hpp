#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "safevpr/core.hpp"
#include "safevpr/rng.hpp"

namespace safevpr::data_io {

// Score family supported on [0,1].
struct ScoreDistribution {
  enum class Family { Beta, TruncatedNormal, Uniform };

  Family family = Family::Uniform;
  double p1 = 0.0;  // Beta a, normal mean, uniform low
  double p2 = 1.0;  // Beta b, normal sigma, uniform high

  static ScoreDistribution beta(double a, double b);
  static ScoreDistribution truncated_normal(double mean, double sigma);
  static ScoreDistribution uniform(double low = 0.0, double high = 1.0);

  // "beta:A,B", "tnorm:MEAN,SIGMA", "uniform" or "uniform:LOW,HIGH".
  static ScoreDistribution parse(const std::string& text);
  std::string to_string() const;

  void validate() const;
  double sample(CounterStream& rng) const;

  bool operator==(const ScoreDistribution&) const = default;
};

// Test-side transform. Overrides replace the calibration-side distributions,
// then scores are raised to `power`, then positives scoring at or above
// `flip_above` become false matches with probability `flip_rate`.
struct ShiftSpec {
  std::optional<ScoreDistribution> pos;
  std::optional<ScoreDistribution> neg;
  std::optional<double> pos_rate;
  double power = 1.0;
  std::optional<double> flip_above;
  double flip_rate = 0.0;

  bool active() const;
  void validate() const;
};

struct SyntheticSpec {
  std::size_t n_cal = 1000;
  std::size_t n_test = 1000;
  double pos_rate = 0.7;
  ScoreDistribution pos = ScoreDistribution::beta(5.0, 2.0);
  ScoreDistribution neg = ScoreDistribution::beta(2.0, 5.0);
  ShiftSpec shift;
  std::uint64_t seed = 0;
  // When set, pose errors are drawn below this threshold for correct
  // matches and above it for false ones.
  std::optional<double> pose_threshold_m;
  std::string condition = "synthetic";
  std::optional<std::string> test_condition;
  std::string backbone = "synthetic";
  std::string dataset = "synthetic";

  void validate() const;
};

struct SyntheticData {
  std::vector<ScoredQuery> cal;
  std::vector<ScoredQuery> test;
};

// Record i of each side draws from its own Philox stream, so output depends
// only on the spec and seed.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace safevpr::data_io
