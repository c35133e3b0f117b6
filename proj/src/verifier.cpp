#include "safevpr/verifier.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>

namespace safevpr::verifier {

namespace {

constexpr std::size_t kTopK = 10;

// Index of the unique maximum, or nullopt when the maximum is attained twice.
template <typename At>
std::optional<std::size_t> unique_argmax(std::size_t n, At at) {
  std::size_t best = 0;
  double best_value = at(0);
  bool tied = false;
  for (std::size_t k = 1; k < n; ++k) {
    const double v = at(k);
    if (v > best_value) {
      best_value = v;
      best = k;
      tied = false;
    } else if (v == best_value) {
      tied = true;
    }
  }
  if (tied) return std::nullopt;
  return best;
}

void check_pair_shapes(const FeatureStack& q, const FeatureStack& c) {
  if (q.frames() != c.frames() || q.patches() != c.patches() || q.dim() != c.dim()) {
    throw DimensionError("query stack " + std::to_string(q.frames()) + "x" + std::to_string(q.patches()) + "x" +
                         std::to_string(q.dim()) + " does not match candidate stack " +
                         std::to_string(c.frames()) + "x" + std::to_string(c.patches()) + "x" +
                         std::to_string(c.dim()));
  }
}

FeatureStack ensure_normalized(const FeatureStack& s) { return s.normalized() ? s : l2_normalize(s); }

}  // namespace

FeatureStack l2_normalize(const FeatureStack& stack) {
  FeatureStack out = stack;
  const std::size_t d = stack.dim();
  out.zero_patch_frames_.assign(stack.frames(), false);
  for (std::size_t t = 0; t < stack.frames(); ++t) {
    for (std::size_t i = 0; i < stack.patches(); ++i) {
      const std::size_t base = (t * stack.patches() + i) * d;
      double sq = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double v = stack.data_[base + k];
        sq += v * v;
      }
      if (sq == 0.0) {
        out.zero_patch_frames_[t] = true;
        continue;
      }
      const double norm = std::sqrt(sq);
      for (std::size_t k = 0; k < d; ++k) {
        out.data_[base + k] = static_cast<float>(static_cast<double>(stack.data_[base + k]) / norm);
      }
    }
  }
  out.normalized_ = true;
  return out;
}

FrameView frame_view(const FeatureStack& stack, std::size_t t) {
  return FrameView{stack.frame(t), stack.patches(), stack.dim()};
}

SimMatrix::SimMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) throw DimensionError("similarity matrix data does not match its shape");
}

SimMatrix patch_similarity(const FrameView& query, const FrameView& candidate) {
  if (query.dim != candidate.dim) {
    throw DimensionError("patch dimension mismatch: " + std::to_string(query.dim) + " vs " +
                         std::to_string(candidate.dim));
  }
  if (query.data.size() != query.patches * query.dim || candidate.data.size() != candidate.patches * candidate.dim) {
    throw DimensionError("frame data does not match its declared shape");
  }
  const std::size_t d = query.dim;
  SimMatrix sim(query.patches, candidate.patches);
  for (std::size_t i = 0; i < query.patches; ++i) {
    const float* qi = query.data.data() + i * d;
    for (std::size_t j = 0; j < candidate.patches; ++j) {
      const float* cj = candidate.data.data() + j * d;
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += static_cast<double>(qi[k]) * static_cast<double>(cj[k]);
      sim(i, j) = acc;
    }
  }
  return sim;
}

MatchSet mnn_matches(const SimMatrix& sim) {
  MatchSet out;
  if (sim.rows() == 0 || sim.cols() == 0) return out;

  std::vector<std::optional<std::size_t>> col_best(sim.cols());
  for (std::size_t j = 0; j < sim.cols(); ++j) {
    col_best[j] = unique_argmax(sim.rows(), [&](std::size_t i) { return sim(i, j); });
  }

  for (std::size_t i = 0; i < sim.rows(); ++i) {
    const auto row = sim.row(i);
    const auto j = unique_argmax(row.size(), [&](std::size_t k) { return row[k]; });
    if (!j || col_best[*j] != i) continue;

    double second = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k != *j) second = std::max(second, row[k]);
    }
    out.pairs.push_back(MatchPair{i, *j, row[*j], second});
  }
  return out;
}

MatchSet lowe_filter(const MatchSet& matches, double ratio) {
  MatchSet out;
  for (const auto& m : matches.pairs) {
    if (m.best_sim <= 0.0) continue;
    if (m.second_best_sim / m.best_sim < ratio - kRatioTieTolerance) out.pairs.push_back(m);
  }
  return out;
}

std::vector<FrameRatio> frame_ratios(const FeatureStack& query, const FeatureStack& candidate, double ratio) {
  check_pair_shapes(query, candidate);
  const FeatureStack q = ensure_normalized(query);
  const FeatureStack c = ensure_normalized(candidate);

  std::vector<FrameRatio> out;
  out.reserve(q.frames());
  for (std::size_t t = 0; t < q.frames(); ++t) {
    const SimMatrix sim = patch_similarity(frame_view(q, t), frame_view(c, t));
    const std::size_t survivors = lowe_filter(mnn_matches(sim), ratio).pairs.size();
    out.push_back(FrameRatio{t, static_cast<double>(survivors) / static_cast<double>(q.patches()), survivors});
  }
  return out;
}

double sequence_score(const FeatureStack& query, const FeatureStack& candidate, double ratio) {
  const auto ratios = frame_ratios(query, candidate, ratio);
  double sum = 0.0;
  for (const auto& fr : ratios) sum += fr.ratio;
  return sum / static_cast<double>(ratios.size());
}

std::string to_string(Aggregate kind) {
  switch (kind) {
    case Aggregate::PatchMean:
      return "patch_mean";
    case Aggregate::PatchMax:
      return "patch_max";
    case Aggregate::PatchTop10:
      return "patch_top10";
  }
  return "unknown";
}

Aggregate parse_aggregate(const std::string& name) {
  if (name == "patch_mean") return Aggregate::PatchMean;
  if (name == "patch_max") return Aggregate::PatchMax;
  if (name == "patch_top10") return Aggregate::PatchTop10;
  throw ConfigError("unknown aggregation variant '" + name + "'");
}

double aggregate_variant(const FeatureStack& query, const FeatureStack& candidate, Aggregate kind) {
  check_pair_shapes(query, candidate);
  const FeatureStack q = ensure_normalized(query);
  const FeatureStack c = ensure_normalized(candidate);

  double temporal = 0.0;
  std::vector<double> row_best(q.patches());
  for (std::size_t t = 0; t < q.frames(); ++t) {
    const SimMatrix sim = patch_similarity(frame_view(q, t), frame_view(c, t));
    for (std::size_t i = 0; i < sim.rows(); ++i) {
      const auto row = sim.row(i);
      row_best[i] = *std::max_element(row.begin(), row.end());
    }

    double frame_score = 0.0;
    switch (kind) {
      case Aggregate::PatchMean: {
        for (double v : row_best) frame_score += v;
        frame_score /= static_cast<double>(row_best.size());
        break;
      }
      case Aggregate::PatchMax:
        frame_score = *std::max_element(row_best.begin(), row_best.end());
        break;
      case Aggregate::PatchTop10: {
        const std::size_t k = std::min(kTopK, row_best.size());
        std::vector<double> sorted = row_best;
        std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end(),
                          std::greater<>());
        for (std::size_t m = 0; m < k; ++m) frame_score += sorted[m];
        frame_score /= static_cast<double>(k);
        break;
      }
    }
    temporal += frame_score;
  }
  return temporal / static_cast<double>(q.frames());
}

}  // namespace safevpr::verifier
