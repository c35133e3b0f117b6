#include "safevpr/cli.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "safevpr/calibrator.hpp"
#include "safevpr/data_io.hpp"
#include "safevpr/synthetic.hpp"
#include "safevpr/text.hpp"
#include "safevpr/verifier.hpp"

namespace safevpr::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using text::format_double;

namespace {

std::string threshold_text(double t) { return std::isinf(t) ? "abstain" : format_double(t); }

std::string edge_text(double e) {
  if (std::isinf(e)) return e > 0 ? "+inf" : "-inf";
  return format_double(e);
}

std::string opt_text(const std::optional<double>& v) { return v ? format_double(*v) : "-"; }

std::vector<double> scores_of(std::span<const ScoredQuery> rows) {
  std::vector<double> s;
  s.reserve(rows.size());
  for (const auto& q : rows) s.push_back(q.score);
  return s;
}

void add_risk_options(CLI::App& cmd, RiskConfig& cfg) {
  cmd.add_option("--alpha", cfg.alpha, "Target false-discovery rate")->capture_default_str();
  cmd.add_option("--delta", cfg.delta, "Confidence complement of the FDR bound")->capture_default_str();
  cmd.add_option("--bins", cfg.bins, "Mondrian score bins B")->capture_default_str();
  cmd.add_option("--grid", cfg.grid_size, "Threshold grid size M")->capture_default_str();
}

// ---------------------------------------------------------------- score

struct ScoreArgs {
  std::vector<std::string> queries;
  std::vector<std::string> candidates;
  std::string variant = "mnn";
  double ratio = 0.9;
  std::string out;
};

int cmd_score(const ScoreArgs& a, std::ostream& out) {
  if (a.queries.size() != a.candidates.size()) {
    throw ConfigError("--query and --candidate must be given the same number of times");
  }
  if (!(a.ratio > 0.0 && a.ratio <= 1.0)) throw ConfigError("--ratio must lie in (0,1]");
  const bool mnn = a.variant == "mnn";
  const verifier::Aggregate kind = mnn ? verifier::Aggregate::PatchMean : verifier::parse_aggregate(a.variant);

  std::ostringstream rows;
  rows << "query,candidate,variant,score\n";
  for (std::size_t i = 0; i < a.queries.size(); ++i) {
    const auto q = data_io::read_feature_file(a.queries[i]);
    const auto c = data_io::read_feature_file(a.candidates[i]);
    const double s = mnn ? verifier::sequence_score(q, c, a.ratio) : verifier::aggregate_variant(q, c, kind);
    rows << a.queries[i] << ',' << a.candidates[i] << ',' << a.variant << ',' << format_double(s) << '\n';
  }
  if (a.out.empty()) {
    out << rows.str();
  } else {
    data_io::write_text_file(a.out, rows.str());
    out << "wrote " << a.queries.size() << " score rows to " << a.out << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------- calibrate

struct CalibrateArgs {
  std::string scores;
  std::string out;
  std::string mode = "mondrian";
  std::string selection = "max_acceptance";
  RiskConfig cfg;
};

void print_table_summary(const ThresholdTable& table, std::ostream& out) {
  out << "mode: " << to_string(table.mode) << '\n';
  out << "n_cal: " << table.fit_meta.n_cal << '\n';
  out << "fallback_triggered: " << (table.fit_meta.fallback_triggered ? "yes" : "no") << '\n';
  out << "bin  lower  upper  threshold  per_test_delta\n";
  std::size_t abstaining = 0;
  for (std::size_t b = 0; b < table.bin_count(); ++b) {
    const double lower = b == 0 ? -std::numeric_limits<double>::infinity() : table.bin_edges[b - 1];
    const double upper = b < table.bin_edges.size() ? table.bin_edges[b] : std::numeric_limits<double>::infinity();
    if (std::isinf(table.thresholds[b])) ++abstaining;
    out << b << "  " << edge_text(lower) << "  " << edge_text(upper) << "  " << threshold_text(table.thresholds[b])
        << "  " << format_double(table.fit_meta.per_test_delta.at(b)) << '\n';
  }
  out << "abstaining bins: " << abstaining << '/' << table.bin_count() << '\n';
}

int cmd_calibrate(CalibrateArgs a, std::ostream& out, std::ostream& err) {
  a.cfg.selection = parse_selection(a.selection);
  a.cfg.validate();
  if (a.mode != "vanilla" && a.mode != "mondrian") throw ConfigError("--mode must be vanilla or mondrian");
  const auto cal = data_io::load_score_table(a.scores);
  if (cal.empty()) throw ConfigError("calibration table '" + a.scores + "' has no rows");

  ThresholdTable table;
  if (a.mode == "vanilla") {
    table = calibrator::vanilla_fit(cal, a.cfg);
  } else {
    table = calibrator::mondrian_fit(cal, a.cfg);
    if (table.fit_meta.fallback_triggered) {
      err << "warning: n_cal=" << cal.size() << " < 5B/alpha=" << format_double(5.0 * a.cfg.bins / a.cfg.alpha)
          << "; falling back to vanilla LTT\n";
    }
  }
  data_io::save_threshold_table(table, a.out);
  print_table_summary(table, out);
  out << "wrote " << a.out << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string table;
  std::vector<std::string> scores;
  std::string cal_scores;
  std::string setup_id;
  std::optional<double> pose_threshold;
  std::string out;
  std::string plot_csv;
  double alpha = RiskConfig{}.alpha;
};

void append_bin_rows(std::ostream& os, const std::string& setup_id, const ThresholdTable& table,
                     std::span<const ScoredQuery> test, std::span<const int> labels,
                     std::span<const ScoredQuery> cal) {
  const std::size_t nbins = table.bin_count();
  std::vector<std::vector<double>> test_bins(nbins), cal_bins(nbins);
  std::vector<std::size_t> accepts(nbins, 0), false_accepts(nbins, 0), test_false(nbins, 0), cal_false(nbins, 0);
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto d = calibrator::decide(table, test[i].score);
    test_bins[d.routed_bin].push_back(test[i].score);
    if (labels[i] == 0) ++test_false[d.routed_bin];
    if (d.accepted) {
      ++accepts[d.routed_bin];
      if (labels[i] == 0) ++false_accepts[d.routed_bin];
    }
  }
  for (const auto& q : cal) {
    const std::size_t b = std::min(calibrator::route(table.bin_edges, q.score), nbins - 1);
    cal_bins[b].push_back(q.score);
    if (q.label == 0) ++cal_false[b];
  }
  const auto rate = [](std::size_t num, std::size_t den) {
    return den == 0 ? std::string() : format_double(static_cast<double>(num) / static_cast<double>(den));
  };
  for (std::size_t b = 0; b < nbins; ++b) {
    const double lower = b == 0 ? -std::numeric_limits<double>::infinity() : table.bin_edges[b - 1];
    const double upper = b < table.bin_edges.size() ? table.bin_edges[b] : std::numeric_limits<double>::infinity();
    const bool have_ks = !cal_bins[b].empty() && !test_bins[b].empty();
    os << setup_id << ',' << b << ',' << edge_text(lower) << ',' << edge_text(upper) << ','
       << threshold_text(table.thresholds[b]) << ',' << test_bins[b].size() << ',' << accepts[b] << ','
       << false_accepts[b] << ',' << rate(test_false[b], test_bins[b].size()) << ',' << cal_bins[b].size() << ','
       << rate(cal_false[b], cal_bins[b].size()) << ','
       << (have_ks ? format_double(evaluator::ks_two_sample(cal_bins[b], test_bins[b])) : std::string()) << '\n';
  }
}

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  if (!(a.alpha > 0.0 && a.alpha < 1.0)) throw ConfigError("--alpha must lie in (0,1)");
  if (a.pose_threshold && !(*a.pose_threshold >= 0.0)) throw ConfigError("--pose-threshold must be nonnegative");
  if (!a.setup_id.empty() && a.scores.size() != 1) throw ConfigError("--setup-id needs exactly one --scores file");
  const auto table = data_io::load_threshold_table(a.table);
  RiskConfig cfg;
  cfg.alpha = a.alpha;

  std::vector<ScoredQuery> cal;
  if (!a.cal_scores.empty()) cal = data_io::load_score_table(a.cal_scores);

  std::vector<EvalReport> reports;
  std::ostringstream bins;
  bins << "setup_id,bin,lower,upper,threshold,test_count,test_accepts,test_false_accepts,test_false_rate,cal_count,"
          "cal_false_rate,ks\n";
  for (const auto& path : a.scores) {
    const auto test = data_io::load_score_table(path);
    evaluator::EvalOptions opts;
    opts.setup_id = a.setup_id.empty() ? fs::path(path).stem().string() : a.setup_id;
    opts.label_mode.pose_threshold_m = a.pose_threshold;
    if (!cal.empty()) opts.cal_scores = scores_of(cal);
    reports.push_back(evaluator::evaluate_setup(table, test, cfg, opts));
    append_bin_rows(bins, opts.setup_id, table, test, evaluator::labels_for(test, opts.label_mode), cal);
  }

  out << "label_mode: " << (a.pose_threshold ? "pose_error<=" + format_double(*a.pose_threshold) + "m" : "retrieval")
      << '\n';
  out << "setup  fdr  tpr  coverage  accepts  valid  non_trivial  auroc  ks_global  ks_within_bin\n";
  for (const auto& r : reports) {
    out << r.setup_id << "  " << format_double(r.fdr) << "  " << format_double(r.tpr) << "  "
        << format_double(r.coverage) << "  " << r.accept_count << "  " << (r.valid ? "yes" : "NO") << "  "
        << (r.non_trivial ? "yes" : "no") << "  " << opt_text(r.auroc) << "  " << opt_text(r.ks_global) << "  "
        << opt_text(r.ks_within_bin) << '\n';
  }
  const auto summary = evaluator::summarize(reports);
  out << "valid: " << summary.valid << '/' << summary.setups << "  non_trivial: " << summary.non_trivial << '/'
      << summary.setups << "  mean_fdr(nonempty): " << opt_text(summary.mean_fdr)
      << "  mean_tpr: " << format_double(summary.mean_tpr) << '\n';

  if (!a.out.empty()) {
    std::ostringstream os;
    data_io::write_eval_reports(os, reports);
    data_io::write_text_file(a.out, os.str());
  }
  if (!a.plot_csv.empty()) data_io::write_text_file(a.plot_csv, bins.str());
  return summary.valid == summary.setups ? kExitOk : kExitInvalid;
}

// ---------------------------------------------------------------- probe

struct ProbeArgs {
  std::string manifest;
  std::vector<std::string> probes;
  std::optional<std::size_t> resamples;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  std::string out_dir;
};

evaluator::ProbeData load_probe_data(const RunManifest& m) {
  evaluator::ProbeData data;
  for (const auto& p : m.calibration_tables) {
    auto rows = data_io::load_score_table(p);
    data.calibration.insert(data.calibration.end(), rows.begin(), rows.end());
  }
  for (const auto& p : m.test_tables) {
    auto rows = data_io::load_score_table(p);
    data.test.insert(data.test.end(), rows.begin(), rows.end());
  }
  return data;
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

int cmd_probe(const ProbeArgs& a, std::ostream& out) {
  const RunManifest m = load_manifest(a.manifest);
  const auto data = load_probe_data(m);
  const std::vector<std::string> probes = a.probes.empty() ? m.probes : a.probes;
  if (probes.empty()) throw ConfigError("no probe selected (use --probe or the manifest's probes list)");
  const fs::path out_dir = a.out_dir.empty() ? m.output_dir : fs::path(a.out_dir);
  fs::create_directories(out_dir);
  const std::uint64_t seed = a.seed.value_or(m.seed);
  const std::size_t resamples = a.resamples.value_or(m.resamples);
  bool all_valid = true;

  for (const auto& probe : probes) {
    std::ostringstream csv;
    if (probe == "bootstrap") {
      csv << "setup_id,n_resamples,p_valid,mean_fdr,mean_tpr,ci_low,ci_high,robust_pass\n";
      out << "bootstrap (" << resamples << " resamples, seed " << seed << ")\n";
      std::size_t robust = 0;
      for (const auto& setup : m.setups) {
        const auto cal = evaluator::select_calibration(data.calibration, setup.cal_pool, setup.backbone);
        const auto test = evaluator::select_test(setup, data.test);
        const auto r = evaluator::bootstrap_validity(
            cal, test, m.risk, evaluator::BootstrapOptions{resamples, seed, a.threads, setup.label_mode});
        if (r.robust_pass) ++robust;
        csv << setup.setup_id << ',' << r.n_resamples << ',' << format_double(r.p_valid) << ','
            << format_double(r.mean_fdr) << ',' << format_double(r.mean_tpr) << ',' << format_double(r.ci_low) << ','
            << format_double(r.ci_high) << ',' << bool_text(r.robust_pass) << '\n';
        out << "  " << setup.setup_id << "  p_valid=" << format_double(r.p_valid)
            << "  mean_fdr=" << format_double(r.mean_fdr) << "  ci=[" << format_double(r.ci_low) << ", "
            << format_double(r.ci_high) << "]  robust_pass=" << (r.robust_pass ? "yes" : "NO") << '\n';
      }
      out << "  robust-pass: " << robust << '/' << m.setups.size() << '\n';
      all_valid = all_valid && robust == m.setups.size();
    } else if (probe == "holdout") {
      csv << "setup_id,dropped_condition,fdr,tpr,coverage,accept_count,valid,non_trivial,fallback_triggered\n";
      out << "cal-condition hold-out\n";
      std::size_t pairs = 0, pair_pass = 0, fully = 0;
      for (const auto& setup : m.setups) {
        const auto h = evaluator::cal_condition_holdout(setup, data, m.risk);
        for (const auto& e : h.entries) {
          ++pairs;
          if (e.report.valid) ++pair_pass;
          csv << setup.setup_id << ',' << e.dropped_condition << ',' << format_double(e.report.fdr) << ','
              << format_double(e.report.tpr) << ',' << format_double(e.report.coverage) << ','
              << e.report.accept_count << ',' << bool_text(e.report.valid) << ',' << bool_text(e.report.non_trivial)
              << ',' << bool_text(e.fallback_triggered) << '\n';
          out << "  " << setup.setup_id << " drop " << e.dropped_condition << "  fdr=" << format_double(e.report.fdr)
              << "  valid=" << (e.report.valid ? "yes" : "NO") << (e.fallback_triggered ? "  (vanilla fallback)" : "")
              << '\n';
        }
        if (h.fully_robust) ++fully;
      }
      out << "  pair pass: " << pair_pass << '/' << pairs << "  fully robust: " << fully << '/' << m.setups.size()
          << '\n';
      all_valid = all_valid && pair_pass == pairs;
    } else if (probe == "lodo") {
      csv << "held_out_dataset,setup_id,fdr,tpr,coverage,accept_count,valid,non_trivial,fallback_triggered\n";
      out << "leave-one-dataset-out\n";
      const auto entries = evaluator::lodo_run(m.setups, data, m.risk);
      std::vector<EvalReport> reports;
      for (const auto& e : entries) {
        reports.push_back(e.report);
        csv << e.held_out_dataset << ',' << e.setup_id << ',' << format_double(e.report.fdr) << ','
            << format_double(e.report.tpr) << ',' << format_double(e.report.coverage) << ','
            << e.report.accept_count << ',' << bool_text(e.report.valid) << ',' << bool_text(e.report.non_trivial)
            << ',' << bool_text(e.fallback_triggered) << '\n';
        out << "  hold out " << e.held_out_dataset << ": " << e.setup_id << "  fdr=" << format_double(e.report.fdr)
            << "  tpr=" << format_double(e.report.tpr) << "  valid=" << (e.report.valid ? "yes" : "NO") << '\n';
      }
      const auto s = evaluator::summarize(reports);
      out << "  valid: " << s.valid << '/' << s.setups << "  non_trivial: " << s.non_trivial << '/' << s.setups
          << "  mean_fdr(nonempty): " << opt_text(s.mean_fdr) << "  mean_tpr: " << format_double(s.mean_tpr) << '\n';
      all_valid = all_valid && s.valid == s.setups;
    } else {
      throw ConfigError("unknown probe '" + probe + "' (expected bootstrap, holdout or lodo)");
    }
    data_io::write_text_file(out_dir / (probe + ".csv"), csv.str());
  }
  return all_valid ? kExitOk : kExitInvalid;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  data_io::SyntheticSpec spec;
  std::string pos = "beta:5,2";
  std::string neg = "beta:2,5";
  std::string test_pos;
  std::string test_neg;
  std::optional<double> test_pos_rate;
  std::optional<std::string> test_condition;
  std::string cal_out = "cal.csv";
  std::string test_out = "test.csv";
};

int cmd_synth(SynthArgs a, std::ostream& out) {
  a.spec.pos = data_io::ScoreDistribution::parse(a.pos);
  a.spec.neg = data_io::ScoreDistribution::parse(a.neg);
  if (!a.test_pos.empty()) a.spec.shift.pos = data_io::ScoreDistribution::parse(a.test_pos);
  if (!a.test_neg.empty()) a.spec.shift.neg = data_io::ScoreDistribution::parse(a.test_neg);
  a.spec.shift.pos_rate = a.test_pos_rate;
  a.spec.test_condition = a.test_condition;
  const auto data = data_io::generate_synthetic(a.spec);
  data_io::save_score_table(data.cal, a.cal_out);
  data_io::save_score_table(data.test, a.test_out);

  out << "seed: " << a.spec.seed << '\n';
  out << "cal: " << data.cal.size() << " rows -> " << a.cal_out << '\n';
  out << "test: " << data.test.size() << " rows -> " << a.test_out << '\n';
  if (!data.cal.empty() && !data.test.empty()) {
    out << "ks(cal, test): " << format_double(evaluator::ks_two_sample(scores_of(data.cal), scores_of(data.test)))
        << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------- manifest

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("manifest field '") + key + "' has the wrong type");
  }
}

std::vector<fs::path> path_list(const json& doc, const char* key, const fs::path& base) {
  std::vector<fs::path> out;
  for (const auto& p : get_or<std::vector<std::string>>(doc, key, {})) {
    auto path = resolve(base, p);
    if (!fs::exists(path)) throw ConfigError("manifest references missing file '" + path.string() + "'");
    out.push_back(std::move(path));
  }
  return out;
}

}  // namespace

RunManifest load_manifest(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(data_io::read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("manifest '" + path.string() + "' is not valid JSON: " + e.what());
  }
  if (!doc.is_object()) throw ConfigError("manifest must be a JSON object");
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");

  RunManifest m;
  m.risk.alpha = get_or(doc, "alpha", m.risk.alpha);
  m.risk.delta = get_or(doc, "delta", m.risk.delta);
  m.risk.bins = get_or(doc, "bins", m.risk.bins);
  m.risk.grid_size = get_or(doc, "grid", m.risk.grid_size);
  m.risk.lowe_ratio = get_or(doc, "lowe_ratio", m.risk.lowe_ratio);
  m.risk.selection = parse_selection(get_or<std::string>(doc, "selection", to_string(m.risk.selection)));
  m.risk.validate();
  m.seed = get_or<std::uint64_t>(doc, "seed", 0);
  m.resamples = get_or<std::size_t>(doc, "resamples", m.resamples);
  m.calibration_tables = path_list(doc, "calibration_tables", base);
  m.test_tables = path_list(doc, "test_tables", base);
  m.feature_files = path_list(doc, "feature_files", base);
  m.probes = get_or<std::vector<std::string>>(doc, "probes", {});
  if (doc.contains("output_dir")) m.output_dir = resolve(base, get_or<std::string>(doc, "output_dir", ""));

  if (!doc.contains("setups") || !doc["setups"].is_array()) throw ConfigError("manifest needs a 'setups' array");
  for (const auto& s : doc["setups"]) {
    evaluator::SetupDefinition setup;
    setup.setup_id = get_or<std::string>(s, "setup_id", "");
    setup.test_condition = get_or<std::string>(s, "test_condition", "");
    setup.backbone = get_or<std::string>(s, "backbone", "");
    setup.dataset = get_or<std::string>(s, "dataset", "");
    if (s.contains("pose_threshold_m")) setup.label_mode.pose_threshold_m = get_or<double>(s, "pose_threshold_m", 0.0);
    if (!s.contains("cal_pool") || !s["cal_pool"].is_array()) {
      throw ConfigError("setup '" + setup.setup_id + "' needs a 'cal_pool' array");
    }
    for (const auto& sel : s["cal_pool"]) {
      setup.cal_pool.push_back(
          evaluator::CalSelector{get_or<std::string>(sel, "condition", ""), get_or<std::string>(sel, "dataset", "")});
    }
    setup.validate();
    m.setups.push_back(std::move(setup));
  }
  return m;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"safevpr: patch-MNN verification and Mondrian LTT calibration for sequence VPR"};
  app.require_subcommand(1);

  ScoreArgs score;
  auto* score_cmd = app.add_subcommand("score", "Score query/candidate feature file pairs");
  score_cmd->add_option("--query", score.queries, "Query feature file (repeat, paired with --candidate)")->required();
  score_cmd->add_option("--candidate", score.candidates, "Candidate feature file (repeat)")->required();
  score_cmd->add_option("--variant", score.variant, "mnn, patch_mean, patch_max or patch_top10")->capture_default_str();
  score_cmd->add_option("--ratio", score.ratio, "Lowe ratio r")->capture_default_str();
  score_cmd->add_option("--out", score.out, "Write rows here instead of standard output");

  CalibrateArgs cal;
  auto* cal_cmd = app.add_subcommand("calibrate", "Fit a threshold table from a calibration score table");
  cal_cmd->add_option("--scores", cal.scores, "Calibration score table")->required();
  cal_cmd->add_option("--out", cal.out, "Threshold table output path")->required();
  add_risk_options(*cal_cmd, cal.cfg);
  cal_cmd->add_option("--mode", cal.mode, "vanilla or mondrian")->capture_default_str();
  cal_cmd->add_option("--selection", cal.selection, "max_acceptance or largest_feasible")->capture_default_str();

  EvaluateArgs ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "Apply a threshold table to test score tables");
  ev_cmd->add_option("--table", ev.table, "Threshold table")->required();
  ev_cmd->add_option("--scores", ev.scores, "Test score table (repeat for several setups)")->required();
  ev_cmd->add_option("--cal-scores", ev.cal_scores, "Calibration score table, enables KS diagnostics");
  ev_cmd->add_option("--setup-id", ev.setup_id, "Setup id (defaults to the score file stem)");
  ev_cmd->add_option("--alpha", ev.alpha, "Target false-discovery rate")->capture_default_str();
  ev_cmd->add_option("--pose-threshold", ev.pose_threshold, "Use 1{pose_error_m <= value} as the label");
  ev_cmd->add_option("--out", ev.out, "EvalReport CSV output path");
  ev_cmd->add_option("--plot-csv", ev.plot_csv, "Per-bin CSV output path");

  ProbeArgs probe;
  auto* probe_cmd = app.add_subcommand("probe", "Run robustness probes from a run manifest");
  probe_cmd->add_option("--manifest", probe.manifest, "Run manifest (JSON)")->required();
  probe_cmd->add_option("--probe", probe.probes, "bootstrap, holdout or lodo (repeatable; default: manifest list)");
  probe_cmd->add_option("--resamples", probe.resamples, "Bootstrap resamples (default 500 or manifest value)");
  probe_cmd->add_option("--seed", probe.seed, "Seed (default: manifest seed)");
  probe_cmd->add_option("--threads", probe.threads, "Worker threads for bootstrap")->capture_default_str();
  probe_cmd->add_option("--out", probe.out_dir, "Output directory (default: manifest output_dir)");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate synthetic calibration/test score tables");
  synth_cmd->add_option("--n-cal", synth.spec.n_cal, "Calibration rows")->capture_default_str();
  synth_cmd->add_option("--n-test", synth.spec.n_test, "Test rows")->capture_default_str();
  synth_cmd->add_option("--pos-rate", synth.spec.pos_rate, "Fraction of correct retrievals")->capture_default_str();
  synth_cmd->add_option("--pos", synth.pos, "Score distribution of correct retrievals")->capture_default_str();
  synth_cmd->add_option("--neg", synth.neg, "Score distribution of false retrievals")->capture_default_str();
  synth_cmd->add_option("--seed", synth.spec.seed, "Seed")->capture_default_str();
  synth_cmd->add_option("--test-pos", synth.test_pos, "Test-side distribution of correct retrievals");
  synth_cmd->add_option("--test-neg", synth.test_neg, "Test-side distribution of false retrievals");
  synth_cmd->add_option("--test-pos-rate", synth.test_pos_rate, "Test-side positive rate");
  synth_cmd->add_option("--shift-power", synth.spec.shift.power, "Raise test scores to this power")
      ->capture_default_str();
  synth_cmd->add_option("--flip-above", synth.spec.shift.flip_above, "Score cutoff for test label flips");
  synth_cmd->add_option("--flip-rate", synth.spec.shift.flip_rate, "Flip probability above the cutoff")
      ->capture_default_str();
  synth_cmd->add_option("--pose-threshold", synth.spec.pose_threshold_m, "Also emit pose errors consistent with labels");
  synth_cmd->add_option("--condition", synth.spec.condition, "Condition tag")->capture_default_str();
  synth_cmd->add_option("--test-condition", synth.test_condition, "Condition tag for test rows");
  synth_cmd->add_option("--backbone", synth.spec.backbone, "Backbone tag")->capture_default_str();
  synth_cmd->add_option("--dataset", synth.spec.dataset, "Dataset tag")->capture_default_str();
  synth_cmd->add_option("--cal-out", synth.cal_out, "Calibration table output")->capture_default_str();
  synth_cmd->add_option("--test-out", synth.test_out, "Test table output")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*score_cmd) return cmd_score(score, out);
    if (*cal_cmd) return cmd_calibrate(cal, out, err);
    if (*ev_cmd) return cmd_evaluate(ev, out);
    if (*probe_cmd) return cmd_probe(probe, out);
    if (*synth_cmd) return cmd_synth(synth, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace safevpr::cli
