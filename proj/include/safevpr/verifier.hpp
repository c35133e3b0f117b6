#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "safevpr/core.hpp"

namespace safevpr::verifier {

// Ratios this close below r are treated as ties with r and rejected, so a
// decimal tie such as 0.72 / 0.8 against r = 0.9 does not slip through on
// rounding.
inline constexpr double kRatioTieTolerance = 1e-9;

// Returns a copy with every patch scaled to unit norm. All-zero patches stay
// zero and flag their frame in zero_patch_frames().
FeatureStack l2_normalize(const FeatureStack& stack);

struct FrameView {
  std::span<const float> data;
  std::size_t patches = 0;
  std::size_t dim = 0;
};

FrameView frame_view(const FeatureStack& stack, std::size_t t);

class SimMatrix {
 public:
  SimMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), values_(rows * cols, 0.0) {}
  SimMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return values_[i * cols_ + j]; }
  double& operator()(std::size_t i, std::size_t j) noexcept { return values_[i * cols_ + j]; }
  std::span<const double> row(std::size_t i) const noexcept {
    return std::span<const double>(values_).subspan(i * cols_, cols_);
  }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> values_;
};

// S(i,j) = <q_i, c_j>, accumulated in double in channel order.
SimMatrix patch_similarity(const FrameView& query, const FrameView& candidate);

struct MatchPair {
  std::size_t query_patch = 0;
  std::size_t candidate_patch = 0;
  double best_sim = 0.0;
  double second_best_sim = 0.0;
};

struct MatchSet {
  std::vector<MatchPair> pairs;
};

// Mutual row/column argmaxes of S. A row or column whose maximum is attained
// more than once takes no part in matching.
MatchSet mnn_matches(const SimMatrix& sim);

// Keeps pairs with best > 0 and second / best strictly below r.
MatchSet lowe_filter(const MatchSet& matches, double ratio);

struct FrameRatio {
  std::size_t frame_index = 0;
  double ratio = 0.0;
  std::size_t survivors = 0;
};

// Per-frame survivor fractions over the diagonal pairing t <-> t. Inputs are
// normalized first when they are not already.
std::vector<FrameRatio> frame_ratios(const FeatureStack& query, const FeatureStack& candidate, double ratio);

// Temporal mean of the per-frame MNN + Lowe survivor fraction; lies in [0,1].
double sequence_score(const FeatureStack& query, const FeatureStack& candidate, double ratio);

enum class Aggregate { PatchMean, PatchMax, PatchTop10 };

std::string to_string(Aggregate kind);
Aggregate parse_aggregate(const std::string& name);

// Patch-level aggregation baselines over row-wise best similarities.
double aggregate_variant(const FeatureStack& query, const FeatureStack& candidate, Aggregate kind);

}  // namespace safevpr::verifier
