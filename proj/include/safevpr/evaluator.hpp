#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "safevpr/core.hpp"

namespace safevpr::evaluator {

// Retrieval correctness by default; with a pose threshold the label becomes
// 1{pose_error <= threshold}.
struct LabelMode {
  std::optional<double> pose_threshold_m;
};

struct CalSelector {
  std::string condition;
  std::string dataset;
};

struct SetupDefinition {
  std::string setup_id;
  std::string test_condition;
  std::vector<CalSelector> cal_pool;
  std::string backbone;
  std::string dataset;
  LabelMode label_mode;

  // Throws ConfigError if the held-out condition appears in the pool.
  void validate() const;
};

// Calibration slices and test slices of every condition; setups select from these.
struct ProbeData {
  std::vector<ScoredQuery> calibration;
  std::vector<ScoredQuery> test;
};

std::vector<int> labels_for(std::span<const ScoredQuery> queries, const LabelMode& mode);

std::vector<Decision> decide_all(const ThresholdTable& table, std::span<const ScoredQuery> queries);

double empirical_fdr(std::span<const Decision> decisions, std::span<const int> labels);

struct TprCoverage {
  double tpr = 0.0;
  double coverage = 0.0;
};

TprCoverage tpr_and_coverage(std::span<const Decision> decisions, std::span<const int> labels);

// Mann-Whitney statistic with midranks: P(pos > neg) + 0.5 P(pos == neg).
double auroc(std::span<const double> scores, std::span<const int> labels);

// sup_x |ECDF_a(x) - ECDF_b(x)|.
double ks_two_sample(std::span<const double> a, std::span<const double> b);

// Mean KS over bins populated on both sides; nullopt when no bin qualifies.
std::optional<double> within_bin_ks(std::span<const double> cal_scores, std::span<const double> test_scores,
                                    std::span<const double> edges);

// Fraction of false matches among queries routed to the table's last bin.
std::optional<double> top_bin_false_rate(const ThresholdTable& table, std::span<const ScoredQuery> queries,
                                         const LabelMode& mode = {});

struct EvalOptions {
  std::string setup_id = "setup";
  LabelMode label_mode;
  // When given, KS shift diagnostics are filled in.
  std::optional<std::vector<double>> cal_scores;
};

EvalReport evaluate_setup(const ThresholdTable& table, std::span<const ScoredQuery> test, const RiskConfig& cfg,
                          const EvalOptions& options = {});

std::vector<ScoredQuery> select_calibration(std::span<const ScoredQuery> pool, std::span<const CalSelector> selectors,
                                            const std::string& backbone);
std::vector<ScoredQuery> select_test(const SetupDefinition& setup, std::span<const ScoredQuery> pool);

// Mondrian fit on the setup's cal pool, evaluation on its held-out condition.
EvalReport run_setup(const SetupDefinition& setup, const ProbeData& data, const RiskConfig& cfg);

struct BootstrapOptions {
  std::size_t n_resamples = 500;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  LabelMode label_mode;
};

struct BootstrapReport {
  std::size_t n_resamples = 0;
  double p_valid = 0.0;
  double mean_fdr = 0.0;
  double mean_tpr = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  bool robust_pass = false;

  bool operator==(const BootstrapReport&) const = default;
};

// Resample i draws |cal| indices with replacement from Philox stream
// (seed, Bootstrap domain, i), refits Mondrian and evaluates on the fixed
// test set. Results do not depend on the thread count.
BootstrapReport bootstrap_validity(std::span<const ScoredQuery> cal, std::span<const ScoredQuery> test,
                                   const RiskConfig& cfg, const BootstrapOptions& options = {});

struct HoldoutEntry {
  std::string dropped_condition;
  EvalReport report;
  bool fallback_triggered = false;
};

struct HoldoutReport {
  std::string setup_id;
  std::vector<HoldoutEntry> entries;
  bool fully_robust = false;
};

HoldoutReport cal_condition_holdout(const SetupDefinition& setup, const ProbeData& data, const RiskConfig& cfg);

struct LodoEntry {
  std::string held_out_dataset;
  std::string setup_id;
  EvalReport report;
  bool fallback_triggered = false;
};

// For each dataset h, calibrates on every other dataset's calibration slices
// (same backbone) and evaluates each setup of h.
std::vector<LodoEntry> lodo_run(std::span<const SetupDefinition> setups, const ProbeData& data,
                                const RiskConfig& cfg);

// Table-level aggregates: mean FDR over setups with a non-empty accept set,
// mean TPR over all setups.
struct Summary {
  std::size_t setups = 0;
  std::size_t valid = 0;
  std::size_t non_trivial = 0;
  std::optional<double> mean_fdr;
  double mean_tpr = 0.0;
};

Summary summarize(std::span<const EvalReport> reports);

}  // namespace safevpr::evaluator
