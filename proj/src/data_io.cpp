#include "safevpr/data_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <json.hpp>

#include "safevpr/text.hpp"

namespace safevpr::data_io {

namespace {

using Kind = FeatureFileError::Kind;
using nlohmann::json;

template <typename T>
void put_le(std::vector<std::byte>& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::byte>(u & 0xFFu));
    u = static_cast<U>(u >> 8);
  }
}

template <typename T>
T get_le(std::span<const std::byte> bytes, std::size_t offset) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v = static_cast<T>(v | (static_cast<T>(std::to_integer<std::uint8_t>(bytes[offset + i])) << (8 * i)));
  }
  return v;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

void check_text_field(const std::string& value, const char* column) {
  if (value.find_first_of(",\r\n") != std::string::npos) {
    throw ConfigError(std::string("column '") + column + "' value '" + value + "' contains a delimiter");
  }
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

bool parse_bool(std::string_view s, std::size_t line) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ParseError(line, "expected true or false, got '" + std::string(s) + "'");
}

std::optional<double> parse_optional_number(std::string_view s, std::size_t line, const char* column) {
  if (s.empty()) return std::nullopt;
  const auto v = text::parse_double(s);
  if (!v) throw ParseError(line, std::string("malformed ") + column + " '" + std::string(s) + "'");
  return v;
}

double parse_number(std::string_view s, std::size_t line, const char* column) {
  const auto v = parse_optional_number(s, line, column);
  if (!v) throw ParseError(line, std::string("missing ") + column);
  return *v;
}

json threshold_value(double t) { return std::isinf(t) ? json("abstain") : json(t); }

double threshold_from_json(const json& v) {
  if (v.is_string()) {
    if (v.get<std::string>() == "abstain") return kAbstain;
    throw ParseError(0, "threshold token must be a number or \"abstain\"");
  }
  if (!v.is_number()) throw ParseError(0, "threshold must be a number or \"abstain\"");
  const double t = v.get<double>();
  if (!std::isfinite(t)) throw ParseError(0, "threshold must be finite or \"abstain\"");
  return t;
}

std::vector<double> number_array(const json& v, const char* field) {
  if (!v.is_array()) throw ParseError(0, std::string("field '") + field + "' must be an array");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw ParseError(0, std::string("field '") + field + "' must hold numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

void require_keys(const json& obj, const std::set<std::string>& keys, const char* where) {
  if (!obj.is_object()) throw ParseError(0, std::string(where) + " must be an object");
  for (const auto& [k, _] : obj.items()) {
    if (!keys.count(k)) throw ParseError(0, std::string("unknown field '") + k + "' in " + where);
  }
  for (const auto& k : keys) {
    if (!obj.contains(k)) throw ParseError(0, std::string("missing field '") + k + "' in " + where);
  }
}

}  // namespace

std::vector<std::byte> encode_feature_payload(std::uint32_t frames, std::uint32_t patches, std::uint32_t dim,
                                              std::span<const float> values) {
  const std::uint64_t count = std::uint64_t{frames} * patches * dim;
  if (count == 0) throw FeatureFileError(Kind::EmptyPayload, "refusing to write a feature file with no payload");
  if (values.size() != count) {
    throw DimensionError("payload has " + std::to_string(values.size()) + " values, header declares " +
                         std::to_string(count));
  }
  std::vector<std::byte> out;
  out.reserve(kFeatureHeaderBytes + 4 * values.size());
  for (char c : kFeatureMagic) out.push_back(static_cast<std::byte>(c));
  put_le<std::uint16_t>(out, kFeatureVersion);
  put_le<std::uint32_t>(out, frames);
  put_le<std::uint32_t>(out, patches);
  put_le<std::uint32_t>(out, dim);
  put_le<std::uint16_t>(out, kDtypeFloat32);
  for (float v : values) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

std::vector<std::byte> encode_feature_file(const FeatureStack& stack) {
  return encode_feature_payload(static_cast<std::uint32_t>(stack.frames()), static_cast<std::uint32_t>(stack.patches()),
                                static_cast<std::uint32_t>(stack.dim()), stack.data());
}

FeatureStack decode_feature_file(std::span<const std::byte> bytes) {
  if (bytes.size() < kFeatureHeaderBytes) {
    throw FeatureFileError(Kind::Truncated, "feature file header truncated: " + std::to_string(bytes.size()) +
                                                " bytes, expected at least " + std::to_string(kFeatureHeaderBytes));
  }
  if (std::memcmp(bytes.data(), kFeatureMagic, sizeof kFeatureMagic) != 0) {
    throw FeatureFileError(Kind::BadMagic, "not a feature file: magic is not SVPRFEAT");
  }
  const auto version = get_le<std::uint16_t>(bytes, 8);
  if (version != kFeatureVersion) {
    throw FeatureFileError(Kind::BadVersion, "unsupported feature file version " + std::to_string(version));
  }
  const auto frames = get_le<std::uint32_t>(bytes, 10);
  const auto patches = get_le<std::uint32_t>(bytes, 14);
  const auto dim = get_le<std::uint32_t>(bytes, 18);
  const auto dtype = get_le<std::uint16_t>(bytes, 22);
  if (dtype != kDtypeFloat32) {
    throw FeatureFileError(Kind::BadDtype, "unsupported feature dtype code " + std::to_string(dtype));
  }
  if (frames < 1 || patches < 2 || dim < 1) {
    throw FeatureFileError(Kind::BadHeader, "invalid feature shape T=" + std::to_string(frames) +
                                                " P=" + std::to_string(patches) + " d=" + std::to_string(dim));
  }
  const std::uint64_t count = std::uint64_t{frames} * patches * dim;
  const std::uint64_t expected = kFeatureHeaderBytes + 4 * count;
  if (bytes.size() < expected) {
    throw FeatureFileError(Kind::Truncated, "feature payload truncated: expected " + std::to_string(expected) +
                                                " bytes, got " + std::to_string(bytes.size()));
  }
  if (bytes.size() > expected) {
    throw FeatureFileError(Kind::TrailingBytes, "feature file has trailing bytes: expected " +
                                                    std::to_string(expected) + " bytes, got " +
                                                    std::to_string(bytes.size()));
  }
  std::vector<float> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    values[i] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, kFeatureHeaderBytes + 4 * i));
  }
  return validate_feature_stack(std::move(values), frames, patches, dim);
}

void write_feature_file(const FeatureStack& stack, const std::filesystem::path& path) {
  const auto bytes = encode_feature_file(stack);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

FeatureStack read_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  const std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_feature_file(std::as_bytes(std::span<const char>(raw)));
}

std::vector<ScoredQuery> parse_score_table(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "score table is empty; header row is mandatory");
  if (strip_cr(line) != kScoreTableHeader) {
    throw ParseError(1, std::string("bad header, expected '") + kScoreTableHeader + "'");
  }

  std::vector<ScoredQuery> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto f = text::split(line, ',');
    if (f.size() != 7) {
      throw ParseError(line_no, "expected 7 columns, found " + std::to_string(f.size()));
    }
    ScoredQuery q;
    q.query_id = std::string(f[0]);
    if (q.query_id.empty()) throw ParseError(line_no, "empty query_id");
    q.score = parse_number(f[1], line_no, "score");
    if (f[2] != "0" && f[2] != "1") {
      throw ParseError(line_no, "label must be 0 or 1, got '" + std::string(f[2]) + "'");
    }
    q.label = f[2] == "1" ? 1 : 0;
    q.pose_error_m = parse_optional_number(f[3], line_no, "pose_error_m");
    if (q.pose_error_m && *q.pose_error_m < 0.0) throw ParseError(line_no, "negative pose error");
    q.condition = std::string(f[4]);
    q.backbone = std::string(f[5]);
    q.dataset = std::string(f[6]);
    rows.push_back(std::move(q));
  }
  return rows;
}

std::vector<ScoredQuery> load_score_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return parse_score_table(in);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path.string() + ": " + e.what());
  }
}

void write_score_table(std::ostream& out, std::span<const ScoredQuery> rows) {
  out << kScoreTableHeader << '\n';
  for (const auto& q : rows) {
    validate(q);
    check_text_field(q.query_id, "query_id");
    check_text_field(q.condition, "condition");
    check_text_field(q.backbone, "backbone");
    check_text_field(q.dataset, "dataset");
    out << q.query_id << ',' << text::format_double(q.score) << ',' << q.label << ','
        << (q.pose_error_m ? text::format_double(*q.pose_error_m) : std::string()) << ',' << q.condition << ','
        << q.backbone << ',' << q.dataset << '\n';
  }
}

void save_score_table(std::span<const ScoredQuery> rows, const std::filesystem::path& path) {
  std::ostringstream os;
  write_score_table(os, rows);
  write_text_file(path, os.str());
}

std::string threshold_table_to_string(const ThresholdTable& table) {
  json thresholds = json::array();
  for (double t : table.thresholds) thresholds.push_back(threshold_value(t));
  json doc = json::object();
  doc["format"] = kThresholdTableFormat;
  doc["version"] = kThresholdTableVersion;
  doc["mode"] = to_string(table.mode);
  doc["bin_edges"] = table.bin_edges;
  doc["thresholds"] = std::move(thresholds);
  doc["fit_meta"] = {{"n_cal", table.fit_meta.n_cal},
                     {"per_test_delta", table.fit_meta.per_test_delta},
                     {"fallback_triggered", table.fit_meta.fallback_triggered}};
  return doc.dump(2) + "\n";
}

ThresholdTable threshold_table_from_string(const std::string& document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw ParseError(0, std::string("threshold table is not valid JSON: ") + e.what());
  }
  require_keys(doc, {"format", "version", "mode", "bin_edges", "thresholds", "fit_meta"}, "threshold table");
  if (doc["format"] != kThresholdTableFormat) throw ParseError(0, "not a threshold table document");
  if (!doc["version"].is_number_integer() || doc["version"].get<int>() != kThresholdTableVersion) {
    throw ParseError(0, "unsupported threshold table version");
  }

  ThresholdTable table;
  const auto& mode = doc["mode"];
  if (mode == "vanilla") {
    table.mode = TableMode::Vanilla;
  } else if (mode == "mondrian") {
    table.mode = TableMode::Mondrian;
  } else {
    throw ParseError(0, "mode must be vanilla or mondrian");
  }
  table.bin_edges = number_array(doc["bin_edges"], "bin_edges");
  if (!doc["thresholds"].is_array()) throw ParseError(0, "field 'thresholds' must be an array");
  for (const auto& t : doc["thresholds"]) table.thresholds.push_back(threshold_from_json(t));

  const auto& meta = doc["fit_meta"];
  require_keys(meta, {"n_cal", "per_test_delta", "fallback_triggered"}, "fit_meta");
  if (!meta["n_cal"].is_number_unsigned()) throw ParseError(0, "fit_meta.n_cal must be a nonnegative integer");
  if (!meta["fallback_triggered"].is_boolean()) throw ParseError(0, "fit_meta.fallback_triggered must be a boolean");
  table.fit_meta.n_cal = meta["n_cal"].get<std::size_t>();
  table.fit_meta.per_test_delta = number_array(meta["per_test_delta"], "per_test_delta");
  table.fit_meta.fallback_triggered = meta["fallback_triggered"].get<bool>();

  if (table.thresholds.size() != table.bin_edges.size() + 1) {
    throw ParseError(0, "threshold count must be one more than the edge count");
  }
  if (table.mode == TableMode::Vanilla && !table.bin_edges.empty()) {
    throw ParseError(0, "vanilla tables carry no bin edges");
  }
  if (std::adjacent_find(table.bin_edges.begin(), table.bin_edges.end(), std::greater_equal<>()) !=
      table.bin_edges.end()) {
    throw ParseError(0, "bin edges must be strictly ascending");
  }
  if (table.fit_meta.per_test_delta.size() != table.thresholds.size()) {
    throw ParseError(0, "per_test_delta must have one entry per bin");
  }
  return table;
}

void save_threshold_table(const ThresholdTable& table, const std::filesystem::path& path) {
  write_text_file(path, threshold_table_to_string(table));
}

ThresholdTable load_threshold_table(const std::filesystem::path& path) {
  try {
    return threshold_table_from_string(read_text_file(path));
  } catch (const ParseError& e) {
    throw ParseError(0, path.string() + ": " + e.what());
  }
}

void write_eval_reports(std::ostream& out, std::span<const EvalReport> reports) {
  const auto opt = [](const std::optional<double>& v) { return v ? text::format_double(*v) : std::string(); };
  out << kEvalReportHeader << '\n';
  for (const auto& r : reports) {
    check_text_field(r.setup_id, "setup_id");
    out << r.setup_id << ',' << text::format_double(r.alpha) << ',' << text::format_double(r.fdr) << ','
        << text::format_double(r.tpr) << ',' << text::format_double(r.coverage) << ',' << r.accept_count << ','
        << bool_text(r.valid) << ',' << bool_text(r.non_trivial) << ',' << opt(r.auroc) << ',' << opt(r.ks_global)
        << ',' << opt(r.ks_within_bin) << '\n';
  }
}

std::vector<EvalReport> parse_eval_reports(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != kEvalReportHeader) {
    throw ParseError(1, std::string("bad header, expected '") + kEvalReportHeader + "'");
  }
  std::vector<EvalReport> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto f = text::split(line, ',');
    if (f.size() != 11) throw ParseError(line_no, "expected 11 columns, found " + std::to_string(f.size()));
    const auto count = text::parse_int(f[5]);
    if (!count || *count < 0) throw ParseError(line_no, "malformed accept_count");
    EvalReport r = make_eval_report(std::string(f[0]), parse_number(f[1], line_no, "alpha"),
                                    parse_number(f[2], line_no, "fdr"), parse_number(f[3], line_no, "tpr"),
                                    parse_number(f[4], line_no, "coverage"), static_cast<std::size_t>(*count));
    if (parse_bool(f[6], line_no) != r.valid || parse_bool(f[7], line_no) != r.non_trivial) {
      throw ParseError(line_no, "validity flags disagree with the reported metrics");
    }
    r.auroc = parse_optional_number(f[8], line_no, "auroc");
    r.ks_global = parse_optional_number(f[9], line_no, "ks_global");
    r.ks_within_bin = parse_optional_number(f[10], line_no, "ks_within_bin");
    out.push_back(std::move(r));
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out << contents;
    if (!out) throw IoError("failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

}  // namespace safevpr::data_io
