#include "safevpr/core.hpp"

#include <algorithm>
#include <cmath>

namespace safevpr {

std::span<const float> FeatureStack::frame(std::size_t t) const {
  if (t >= frames_) throw DimensionError("frame index " + std::to_string(t) + " out of range");
  return std::span<const float>(data_).subspan(t * patches_ * dim_, patches_ * dim_);
}

std::span<const float> FeatureStack::patch(std::size_t t, std::size_t i) const {
  if (i >= patches_) throw DimensionError("patch index " + std::to_string(i) + " out of range");
  return frame(t).subspan(i * dim_, dim_);
}

FeatureStack validate_feature_stack(std::vector<float> raw, std::size_t frames, std::size_t patches,
                                    std::size_t dim) {
  if (frames < 1 || patches < 2 || dim < 1) {
    throw DimensionError("feature stack needs T >= 1, P >= 2, d >= 1 (got T=" + std::to_string(frames) +
                         ", P=" + std::to_string(patches) + ", d=" + std::to_string(dim) + ")");
  }
  const std::size_t expected = frames * patches * dim;
  if (raw.size() != expected) {
    throw DimensionError("feature data has " + std::to_string(raw.size()) + " values, expected " +
                         std::to_string(expected));
  }
  const auto bad = std::find_if(raw.begin(), raw.end(), [](float v) { return !std::isfinite(v); });
  if (bad != raw.end()) {
    throw NonFiniteError("non-finite feature value at flat index " + std::to_string(bad - raw.begin()));
  }
  FeatureStack s;
  s.frames_ = frames;
  s.patches_ = patches;
  s.dim_ = dim;
  s.normalized_ = false;
  s.data_ = std::move(raw);
  return s;
}

void validate(const ScoredQuery& q) {
  if (q.label != 0 && q.label != 1) {
    throw ConfigError("query '" + q.query_id + "': label must be 0 or 1");
  }
  if (!std::isfinite(q.score)) throw ConfigError("query '" + q.query_id + "': score must be finite");
  if (q.pose_error_m && (!std::isfinite(*q.pose_error_m) || *q.pose_error_m < 0.0)) {
    throw ConfigError("query '" + q.query_id + "': pose error must be a nonnegative number");
  }
}

std::string to_string(Selection s) {
  return s == Selection::MaxAcceptance ? "max_acceptance" : "largest_feasible";
}

Selection parse_selection(const std::string& s) {
  if (s == "max_acceptance") return Selection::MaxAcceptance;
  if (s == "largest_feasible") return Selection::LargestFeasible;
  throw ConfigError("unknown selection rule '" + s + "'");
}

void RiskConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0,1)");
  if (grid_size < 1) throw ConfigError("grid size must be >= 1");
  if (bins < 1) throw ConfigError("bin count must be >= 1");
  if (!(lowe_ratio > 0.0 && lowe_ratio <= 1.0)) throw ConfigError("Lowe ratio must lie in (0,1]");
}

std::string to_string(TableMode m) { return m == TableMode::Vanilla ? "vanilla" : "mondrian"; }

bool ThresholdTable::abstains_everywhere() const {
  return std::all_of(thresholds.begin(), thresholds.end(), [](double t) { return std::isinf(t); });
}

bool is_valid(std::size_t accept_count, double fdr, double alpha) noexcept {
  return accept_count == 0 || fdr <= alpha;
}

bool is_non_trivial(bool valid, double coverage) noexcept { return valid && coverage > 0.05; }

EvalReport make_eval_report(std::string setup_id, double alpha, double fdr, double tpr, double coverage,
                            std::size_t accept_count) {
  EvalReport r;
  r.setup_id = std::move(setup_id);
  r.alpha = alpha;
  r.fdr = fdr;
  r.tpr = tpr;
  r.coverage = coverage;
  r.accept_count = accept_count;
  r.valid = is_valid(accept_count, fdr, alpha);
  r.non_trivial = is_non_trivial(r.valid, coverage);
  return r;
}

}  // namespace safevpr
