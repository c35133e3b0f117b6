#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "safevpr/error.hpp"

namespace safevpr {

inline constexpr double kAbstain = std::numeric_limits<double>::infinity();

class FeatureStack;

namespace verifier {
FeatureStack l2_normalize(const FeatureStack& stack);
}

/// T x P x d patch tokens for one query or candidate sequence.
///
/// Data is frame-major, then patch, then channel. Instances are immutable;
/// build one with validate_feature_stack() or l2_normalize().
class FeatureStack {
 public:
  std::size_t frames() const noexcept { return frames_; }
  std::size_t patches() const noexcept { return patches_; }
  std::size_t dim() const noexcept { return dim_; }
  bool normalized() const noexcept { return normalized_; }

  std::span<const float> data() const noexcept { return data_; }
  std::span<const float> frame(std::size_t t) const;
  std::span<const float> patch(std::size_t t, std::size_t i) const;

  // Per frame: true when the frame holds at least one all-zero patch.
  // Only populated on normalized stacks.
  const std::vector<bool>& zero_patch_frames() const noexcept { return zero_patch_frames_; }

 private:
  FeatureStack() = default;

  std::size_t frames_ = 0;
  std::size_t patches_ = 0;
  std::size_t dim_ = 0;
  bool normalized_ = false;
  std::vector<float> data_;
  std::vector<bool> zero_patch_frames_;

  friend FeatureStack validate_feature_stack(std::vector<float>, std::size_t, std::size_t, std::size_t);
  friend FeatureStack verifier::l2_normalize(const FeatureStack&);
};

// Throws DimensionError on shape mismatch (T >= 1, P >= 2, d >= 1, size == T*P*d)
// and NonFiniteError if any value is NaN or infinite.
FeatureStack validate_feature_stack(std::vector<float> raw, std::size_t frames, std::size_t patches,
                                    std::size_t dim);

struct ScoredQuery {
  std::string query_id;
  double score = 0.0;
  int label = 0;
  std::optional<double> pose_error_m;
  std::string condition;
  std::string backbone;
  std::string dataset;
};

// Throws ConfigError unless label is 0/1, score is finite and pose error is >= 0.
void validate(const ScoredQuery& q);

enum class Selection { MaxAcceptance, LargestFeasible };

std::string to_string(Selection s);
Selection parse_selection(const std::string& s);

struct RiskConfig {
  double alpha = 0.10;
  double delta = 0.05;
  int grid_size = 5;
  int bins = 5;
  double lowe_ratio = 0.9;
  Selection selection = Selection::MaxAcceptance;

  void validate() const;
};

enum class TableMode { Vanilla, Mondrian };

std::string to_string(TableMode m);

struct FitMeta {
  std::size_t n_cal = 0;
  // Per-test confidence complement actually used, one per bin.
  std::vector<double> per_test_delta;
  bool fallback_triggered = false;

  bool operator==(const FitMeta&) const = default;
};

/// Fitted calibrator. thresholds[b] == kAbstain marks an abstaining bin.
struct ThresholdTable {
  TableMode mode = TableMode::Vanilla;
  std::vector<double> bin_edges;
  std::vector<double> thresholds;
  FitMeta fit_meta;

  std::size_t bin_count() const noexcept { return thresholds.size(); }
  bool abstains_everywhere() const;

  bool operator==(const ThresholdTable&) const = default;
};

struct Decision {
  std::string query_id;
  bool accepted = false;
  std::size_t routed_bin = 0;
  double threshold_used = kAbstain;
  double score = 0.0;
};

struct EvalReport {
  std::string setup_id;
  double alpha = 0.0;
  double fdr = 0.0;
  double tpr = 0.0;
  double coverage = 0.0;
  std::size_t accept_count = 0;
  bool valid = true;
  bool non_trivial = false;
  std::optional<double> auroc;
  std::optional<double> ks_global;
  std::optional<double> ks_within_bin;

  bool operator==(const EvalReport&) const = default;
};

// valid <=> accept_count == 0 or fdr <= alpha; non_trivial <=> valid and coverage > 0.05.
bool is_valid(std::size_t accept_count, double fdr, double alpha) noexcept;
bool is_non_trivial(bool valid, double coverage) noexcept;

// Assembles a report with the validity predicates derived from the metrics.
EvalReport make_eval_report(std::string setup_id, double alpha, double fdr, double tpr, double coverage,
                            std::size_t accept_count);

}  // namespace safevpr
