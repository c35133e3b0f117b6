#include "safevpr/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <thread>

#include "safevpr/calibrator.hpp"
#include "safevpr/rng.hpp"

namespace safevpr::evaluator {

namespace {

void check_aligned(std::size_t a, std::size_t b) {
  if (a != b) {
    throw DimensionError("decisions and labels differ in length (" + std::to_string(a) + " vs " +
                         std::to_string(b) + ")");
  }
}

std::vector<double> scores_of(std::span<const ScoredQuery> queries) {
  std::vector<double> s;
  s.reserve(queries.size());
  for (const auto& q : queries) s.push_back(q.score);
  return s;
}

bool selected(const ScoredQuery& q, std::span<const CalSelector> selectors) {
  return std::any_of(selectors.begin(), selectors.end(),
                     [&](const CalSelector& s) { return s.condition == q.condition && s.dataset == q.dataset; });
}

}  // namespace

void SetupDefinition::validate() const {
  if (setup_id.empty()) throw ConfigError("setup id must not be empty");
  for (const auto& s : cal_pool) {
    if (s.condition == test_condition) {
      throw ConfigError("setup '" + setup_id + "': held-out condition '" + test_condition +
                        "' appears in its calibration pool");
    }
  }
  if (label_mode.pose_threshold_m && !(*label_mode.pose_threshold_m >= 0.0)) {
    throw ConfigError("setup '" + setup_id + "': pose threshold must be nonnegative");
  }
}

std::vector<int> labels_for(std::span<const ScoredQuery> queries, const LabelMode& mode) {
  std::vector<int> labels;
  labels.reserve(queries.size());
  for (const auto& q : queries) {
    if (!mode.pose_threshold_m) {
      labels.push_back(q.label);
      continue;
    }
    if (!q.pose_error_m) throw ConfigError("query '" + q.query_id + "' has no pose error but pose labels were requested");
    labels.push_back(*q.pose_error_m <= *mode.pose_threshold_m ? 1 : 0);
  }
  return labels;
}

std::vector<Decision> decide_all(const ThresholdTable& table, std::span<const ScoredQuery> queries) {
  std::vector<Decision> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(calibrator::decide(table, q.score, q.query_id));
  return out;
}

double empirical_fdr(std::span<const Decision> decisions, std::span<const int> labels) {
  check_aligned(decisions.size(), labels.size());
  std::size_t accepted = 0;
  std::size_t false_accepts = 0;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    if (!decisions[i].accepted) continue;
    ++accepted;
    if (labels[i] == 0) ++false_accepts;
  }
  return static_cast<double>(false_accepts) / static_cast<double>(std::max<std::size_t>(accepted, 1));
}

TprCoverage tpr_and_coverage(std::span<const Decision> decisions, std::span<const int> labels) {
  check_aligned(decisions.size(), labels.size());
  std::size_t accepted = 0;
  std::size_t true_accepts = 0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    if (labels[i] == 1) ++positives;
    if (decisions[i].accepted) {
      ++accepted;
      if (labels[i] == 1) ++true_accepts;
    }
  }
  TprCoverage r;
  r.tpr = static_cast<double>(true_accepts) / static_cast<double>(std::max<std::size_t>(positives, 1));
  r.coverage = decisions.empty() ? 0.0 : static_cast<double>(accepted) / static_cast<double>(decisions.size());
  return r;
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  check_aligned(scores.size(), labels.size());
  const auto n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw ConfigError("AUROC needs at least one positive and one negative");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Ranks are 1-based; a tie group spanning ranks [lo, hi] shares (lo + hi) / 2.
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1) pos_rank_sum += midrank;
    }
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos);
  const double u = pos_rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

double ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ConfigError("KS statistic needs two nonempty samples");
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double na = static_cast<double>(sa.size());
  const double nb = static_cast<double>(sb.size());

  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < sa.size() && j < sb.size()) {
    const double x = std::min(sa[i], sb[j]);
    while (i < sa.size() && sa[i] <= x) ++i;
    while (j < sb.size() && sb[j] <= x) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

std::optional<double> within_bin_ks(std::span<const double> cal_scores, std::span<const double> test_scores,
                                    std::span<const double> edges) {
  const std::size_t nbins = edges.size() + 1;
  std::vector<std::vector<double>> cal_bins(nbins);
  std::vector<std::vector<double>> test_bins(nbins);
  for (double s : cal_scores) cal_bins[calibrator::route(edges, s)].push_back(s);
  for (double s : test_scores) test_bins[calibrator::route(edges, s)].push_back(s);

  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t b = 0; b < nbins; ++b) {
    if (cal_bins[b].empty() || test_bins[b].empty()) continue;
    sum += ks_two_sample(cal_bins[b], test_bins[b]);
    ++used;
  }
  if (used == 0) return std::nullopt;
  return sum / static_cast<double>(used);
}

std::optional<double> top_bin_false_rate(const ThresholdTable& table, std::span<const ScoredQuery> queries,
                                         const LabelMode& mode) {
  const auto labels = labels_for(queries, mode);
  const std::size_t top = table.bin_edges.size();
  std::size_t members = 0;
  std::size_t false_members = 0;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (calibrator::route(table.bin_edges, queries[i].score) != top) continue;
    ++members;
    if (labels[i] == 0) ++false_members;
  }
  if (members == 0) return std::nullopt;
  return static_cast<double>(false_members) / static_cast<double>(members);
}

EvalReport evaluate_setup(const ThresholdTable& table, std::span<const ScoredQuery> test, const RiskConfig& cfg,
                          const EvalOptions& options) {
  if (test.empty()) throw ConfigError("setup '" + options.setup_id + "' has no test queries");
  const auto labels = labels_for(test, options.label_mode);
  const auto decisions = decide_all(table, test);

  const double fdr = empirical_fdr(decisions, labels);
  const auto [tpr, coverage] = tpr_and_coverage(decisions, labels);
  const auto accepted = static_cast<std::size_t>(
      std::count_if(decisions.begin(), decisions.end(), [](const Decision& d) { return d.accepted; }));
  EvalReport report = make_eval_report(options.setup_id, cfg.alpha, fdr, tpr, coverage, accepted);

  const auto scores = scores_of(test);
  const auto positives = std::count(labels.begin(), labels.end(), 1);
  if (positives > 0 && static_cast<std::size_t>(positives) < labels.size()) report.auroc = auroc(scores, labels);
  if (options.cal_scores && !options.cal_scores->empty()) {
    report.ks_global = ks_two_sample(*options.cal_scores, scores);
    report.ks_within_bin = within_bin_ks(*options.cal_scores, scores, table.bin_edges);
  }
  return report;
}

std::vector<ScoredQuery> select_calibration(std::span<const ScoredQuery> pool, std::span<const CalSelector> selectors,
                                            const std::string& backbone) {
  std::vector<ScoredQuery> out;
  for (const auto& q : pool) {
    if (q.backbone == backbone && selected(q, selectors)) out.push_back(q);
  }
  return out;
}

std::vector<ScoredQuery> select_test(const SetupDefinition& setup, std::span<const ScoredQuery> pool) {
  std::vector<ScoredQuery> out;
  for (const auto& q : pool) {
    if (q.backbone == setup.backbone && q.dataset == setup.dataset && q.condition == setup.test_condition) {
      out.push_back(q);
    }
  }
  return out;
}

EvalReport run_setup(const SetupDefinition& setup, const ProbeData& data, const RiskConfig& cfg) {
  setup.validate();
  const auto cal = select_calibration(data.calibration, setup.cal_pool, setup.backbone);
  if (cal.empty()) throw ConfigError("setup '" + setup.setup_id + "' selects no calibration queries");
  const auto test = select_test(setup, data.test);
  const auto table = calibrator::mondrian_fit(cal, cfg);
  return evaluate_setup(table, test, cfg, EvalOptions{setup.setup_id, setup.label_mode, scores_of(cal)});
}

BootstrapReport bootstrap_validity(std::span<const ScoredQuery> cal, std::span<const ScoredQuery> test,
                                   const RiskConfig& cfg, const BootstrapOptions& options) {
  if (cal.empty()) throw ConfigError("bootstrap needs a nonempty calibration set");
  if (options.n_resamples == 0) throw ConfigError("bootstrap needs at least one resample");

  std::vector<EvalReport> reports(options.n_resamples);
  const auto run = [&](std::size_t index) {
    CounterStream rng(options.seed, stream_id(StreamDomain::Bootstrap, index));
    std::vector<ScoredQuery> sample;
    sample.reserve(cal.size());
    for (std::size_t k = 0; k < cal.size(); ++k) sample.push_back(cal[rng.next_index(cal.size())]);
    const auto table = calibrator::mondrian_fit(sample, cfg);
    reports[index] = evaluate_setup(table, test, cfg, EvalOptions{"bootstrap", options.label_mode, std::nullopt});
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(options.n_resamples)));
  if (workers == 1) {
    for (std::size_t i = 0; i < options.n_resamples; ++i) run(i);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < options.n_resamples; i += workers) run(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  BootstrapReport out;
  out.n_resamples = options.n_resamples;
  std::vector<double> fdrs;
  fdrs.reserve(reports.size());
  std::size_t valid = 0;
  double fdr_sum = 0.0;
  double tpr_sum = 0.0;
  for (const auto& r : reports) {
    if (r.valid) ++valid;
    fdr_sum += r.fdr;
    tpr_sum += r.tpr;
    fdrs.push_back(r.fdr);
  }
  const double n = static_cast<double>(reports.size());
  out.p_valid = static_cast<double>(valid) / n;
  out.mean_fdr = fdr_sum / n;
  out.mean_tpr = tpr_sum / n;
  std::sort(fdrs.begin(), fdrs.end());
  out.ci_low = calibrator::empirical_quantile(fdrs, 0.025);
  out.ci_high = calibrator::empirical_quantile(fdrs, 0.975);
  out.robust_pass = out.p_valid >= 0.95;
  return out;
}

HoldoutReport cal_condition_holdout(const SetupDefinition& setup, const ProbeData& data, const RiskConfig& cfg) {
  setup.validate();
  std::vector<std::string> conditions;
  for (const auto& s : setup.cal_pool) {
    if (std::find(conditions.begin(), conditions.end(), s.condition) == conditions.end()) {
      conditions.push_back(s.condition);
    }
  }
  if (conditions.size() < 2) {
    throw ConfigError("setup '" + setup.setup_id + "': hold-out needs at least two calibration conditions");
  }

  const auto test = select_test(setup, data.test);
  HoldoutReport out;
  out.setup_id = setup.setup_id;
  out.fully_robust = true;
  for (const auto& dropped : conditions) {
    std::vector<CalSelector> pool;
    std::copy_if(setup.cal_pool.begin(), setup.cal_pool.end(), std::back_inserter(pool),
                 [&](const CalSelector& s) { return s.condition != dropped; });
    const auto cal = select_calibration(data.calibration, pool, setup.backbone);
    if (cal.empty()) {
      throw ConfigError("setup '" + setup.setup_id + "': dropping '" + dropped + "' leaves no calibration queries");
    }
    const auto table = calibrator::mondrian_fit(cal, cfg);
    HoldoutEntry entry{dropped,
                       evaluate_setup(table, test, cfg,
                                      EvalOptions{setup.setup_id + "-drop-" + dropped, setup.label_mode, scores_of(cal)}),
                       table.fit_meta.fallback_triggered};
    out.fully_robust = out.fully_robust && entry.report.valid;
    out.entries.push_back(std::move(entry));
  }
  return out;
}

std::vector<LodoEntry> lodo_run(std::span<const SetupDefinition> setups, const ProbeData& data,
                                const RiskConfig& cfg) {
  std::set<std::string> datasets;
  for (const auto& s : setups) {
    s.validate();
    datasets.insert(s.dataset);
  }
  if (datasets.size() < 2) throw ConfigError("leave-one-dataset-out needs setups from at least two datasets");

  std::vector<LodoEntry> out;
  for (const auto& held_out : datasets) {
    for (const auto& setup : setups) {
      if (setup.dataset != held_out) continue;
      std::vector<ScoredQuery> cal;
      for (const auto& q : data.calibration) {
        if (q.dataset != held_out && q.backbone == setup.backbone) cal.push_back(q);
      }
      if (cal.empty()) {
        throw ConfigError("setup '" + setup.setup_id + "': no calibration queries outside dataset '" + held_out + "'");
      }
      const auto table = calibrator::mondrian_fit(cal, cfg);
      const auto test = select_test(setup, data.test);
      out.push_back(LodoEntry{held_out, setup.setup_id,
                              evaluate_setup(table, test, cfg,
                                             EvalOptions{setup.setup_id + "-lodo", setup.label_mode, scores_of(cal)}),
                              table.fit_meta.fallback_triggered});
    }
  }
  return out;
}

Summary summarize(std::span<const EvalReport> reports) {
  Summary s;
  s.setups = reports.size();
  double fdr_sum = 0.0;
  std::size_t nonempty = 0;
  double tpr_sum = 0.0;
  for (const auto& r : reports) {
    if (r.valid) ++s.valid;
    if (r.non_trivial) ++s.non_trivial;
    if (r.accept_count > 0) {
      fdr_sum += r.fdr;
      ++nonempty;
    }
    tpr_sum += r.tpr;
  }
  if (nonempty > 0) s.mean_fdr = fdr_sum / static_cast<double>(nonempty);
  if (!reports.empty()) s.mean_tpr = tpr_sum / static_cast<double>(reports.size());
  return s;
}

}  // namespace safevpr::evaluator
