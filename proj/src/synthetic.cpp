#include "safevpr/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "safevpr/text.hpp"

namespace safevpr::data_io {

namespace {

constexpr int kMaxTruncationTries = 100000;

double standard_normal(CounterStream& rng) {
  const double u1 = rng.next_open_double();
  const double u2 = rng.next_double();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Marsaglia-Tsang; shape < 1 is boosted and corrected with U^(1/shape).
double gamma_variate(CounterStream& rng, double shape) {
  if (shape < 1.0) {
    const double g = gamma_variate(rng, shape + 1.0);
    return g * std::pow(rng.next_open_double(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = standard_normal(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.next_open_double();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::string make_id(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%06zu", prefix, i);
  return buf;
}

}  // namespace

ScoreDistribution ScoreDistribution::beta(double a, double b) { return {Family::Beta, a, b}; }

ScoreDistribution ScoreDistribution::truncated_normal(double mean, double sigma) {
  return {Family::TruncatedNormal, mean, sigma};
}

ScoreDistribution ScoreDistribution::uniform(double low, double high) { return {Family::Uniform, low, high}; }

ScoreDistribution ScoreDistribution::parse(const std::string& text) {
  const auto colon = text.find(':');
  const std::string name = text.substr(0, colon);
  if (name == "uniform" && colon == std::string::npos) return uniform();
  if (colon == std::string::npos) throw ConfigError("distribution '" + text + "' needs parameters, e.g. beta:5,2");

  const auto params = text::split(std::string_view(text).substr(colon + 1), ',');
  if (params.size() != 2) throw ConfigError("distribution '" + text + "' needs exactly two parameters");
  const auto a = text::parse_double(params[0]);
  const auto b = text::parse_double(params[1]);
  if (!a || !b) throw ConfigError("distribution '" + text + "' has a malformed parameter");

  ScoreDistribution d;
  if (name == "beta") {
    d = beta(*a, *b);
  } else if (name == "tnorm") {
    d = truncated_normal(*a, *b);
  } else if (name == "uniform") {
    d = uniform(*a, *b);
  } else {
    throw ConfigError("unknown distribution family '" + name + "'");
  }
  d.validate();
  return d;
}

std::string ScoreDistribution::to_string() const {
  const char* name = family == Family::Beta ? "beta" : family == Family::TruncatedNormal ? "tnorm" : "uniform";
  return std::string(name) + ":" + text::format_double(p1) + "," + text::format_double(p2);
}

void ScoreDistribution::validate() const {
  if (!std::isfinite(p1) || !std::isfinite(p2)) throw ConfigError("distribution parameters must be finite");
  switch (family) {
    case Family::Beta:
      if (p1 <= 0.0 || p2 <= 0.0) throw ConfigError("Beta parameters must be positive");
      break;
    case Family::TruncatedNormal:
      if (p2 <= 0.0) throw ConfigError("truncated normal sigma must be positive");
      if (0.5 * (std::erfc(-(1.0 - p1) / (p2 * std::sqrt(2.0))) - std::erfc(p1 / (p2 * std::sqrt(2.0)))) < 1e-4) {
        throw ConfigError("truncated normal has negligible mass on [0,1]: " + to_string());
      }
      break;
    case Family::Uniform:
      if (!(p1 >= 0.0 && p1 < p2 && p2 <= 1.0)) throw ConfigError("uniform bounds must satisfy 0 <= low < high <= 1");
      break;
  }
}

double ScoreDistribution::sample(CounterStream& rng) const {
  switch (family) {
    case Family::Beta: {
      for (;;) {
        const double x = gamma_variate(rng, p1);
        const double y = gamma_variate(rng, p2);
        if (x + y > 0.0) return x / (x + y);
      }
    }
    case Family::TruncatedNormal: {
      for (int i = 0; i < kMaxTruncationTries; ++i) {
        const double v = p1 + p2 * standard_normal(rng);
        if (v >= 0.0 && v <= 1.0) return v;
      }
      throw ConfigError("truncated normal has negligible mass on [0,1]: " + to_string());
    }
    case Family::Uniform:
      return p1 + (p2 - p1) * rng.next_double();
  }
  return 0.0;
}

bool ShiftSpec::active() const {
  return pos || neg || pos_rate || power != 1.0 || (flip_above && flip_rate > 0.0);
}

void ShiftSpec::validate() const {
  if (pos) pos->validate();
  if (neg) neg->validate();
  if (pos_rate && !(*pos_rate >= 0.0 && *pos_rate <= 1.0)) throw ConfigError("shifted positive rate must lie in [0,1]");
  if (!(power > 0.0 && std::isfinite(power))) throw ConfigError("shift power must be positive");
  if (!(flip_rate >= 0.0 && flip_rate <= 1.0)) throw ConfigError("flip rate must lie in [0,1]");
  if (flip_above && !std::isfinite(*flip_above)) throw ConfigError("flip cutoff must be finite");
}

void SyntheticSpec::validate() const {
  if (!(pos_rate >= 0.0 && pos_rate <= 1.0)) throw ConfigError("positive rate must lie in [0,1]");
  pos.validate();
  neg.validate();
  shift.validate();
  if (pose_threshold_m && !(*pose_threshold_m > 0.0 && std::isfinite(*pose_threshold_m))) {
    throw ConfigError("pose threshold must be positive");
  }
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();

  const auto draw = [&](bool test_side, std::size_t i) {
    CounterStream rng(spec.seed, stream_id(test_side ? StreamDomain::SyntheticTest : StreamDomain::SyntheticCal, i));
    const double rate = test_side && spec.shift.pos_rate ? *spec.shift.pos_rate : spec.pos_rate;

    ScoredQuery q;
    q.query_id = make_id(test_side ? "test" : "cal", i);
    q.label = rng.next_double() < rate ? 1 : 0;
    const ScoreDistribution& pos = test_side && spec.shift.pos ? *spec.shift.pos : spec.pos;
    const ScoreDistribution& neg = test_side && spec.shift.neg ? *spec.shift.neg : spec.neg;
    q.score = (q.label == 1 ? pos : neg).sample(rng);
    if (test_side) {
      if (spec.shift.power != 1.0) q.score = std::pow(q.score, spec.shift.power);
      if (spec.shift.flip_above && q.label == 1 && q.score >= *spec.shift.flip_above &&
          rng.next_double() < spec.shift.flip_rate) {
        q.label = 0;
      }
    }
    if (spec.pose_threshold_m) {
      const double u = rng.next_double();
      q.pose_error_m = q.label == 1 ? *spec.pose_threshold_m * u : *spec.pose_threshold_m * (1.001 + 9.0 * u);
    }
    q.condition = test_side && spec.test_condition ? *spec.test_condition : spec.condition;
    q.backbone = spec.backbone;
    q.dataset = spec.dataset;
    return q;
  };

  SyntheticData out;
  out.cal.reserve(spec.n_cal);
  out.test.reserve(spec.n_test);
  for (std::size_t i = 0; i < spec.n_cal; ++i) out.cal.push_back(draw(false, i));
  for (std::size_t i = 0; i < spec.n_test; ++i) out.test.push_back(draw(true, i));
  return out;
}

}  // namespace safevpr::data_io
