#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "safevpr/core.hpp"

namespace safevpr::data_io {

// Feature file v1, little-endian throughout:
//   offset  0  char[8]  magic "SVPRFEAT"
//   offset  8  u16      version (1)
//   offset 10  u32      T
//   offset 14  u32      P
//   offset 18  u32      d
//   offset 22  u16      dtype (1 = float32)
//   offset 24  f32[T*P*d] payload, frame-major, then patch, then channel
inline constexpr char kFeatureMagic[8] = {'S', 'V', 'P', 'R', 'F', 'E', 'A', 'T'};
inline constexpr std::uint16_t kFeatureVersion = 1;
inline constexpr std::uint16_t kDtypeFloat32 = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 24;

std::vector<std::byte> encode_feature_payload(std::uint32_t frames, std::uint32_t patches, std::uint32_t dim,
                                              std::span<const float> values);
std::vector<std::byte> encode_feature_file(const FeatureStack& stack);
FeatureStack decode_feature_file(std::span<const std::byte> bytes);

void write_feature_file(const FeatureStack& stack, const std::filesystem::path& path);
FeatureStack read_feature_file(const std::filesystem::path& path);

// Score tables are comma-separated with a mandatory header row:
//   query_id,score,label,pose_error_m,condition,backbone,dataset
inline constexpr const char* kScoreTableHeader = "query_id,score,label,pose_error_m,condition,backbone,dataset";

std::vector<ScoredQuery> parse_score_table(std::istream& in);
std::vector<ScoredQuery> load_score_table(const std::filesystem::path& path);
void write_score_table(std::ostream& out, std::span<const ScoredQuery> rows);
void save_score_table(std::span<const ScoredQuery> rows, const std::filesystem::path& path);

inline constexpr const char* kThresholdTableFormat = "safevpr-threshold-table";
inline constexpr int kThresholdTableVersion = 1;

std::string threshold_table_to_string(const ThresholdTable& table);
ThresholdTable threshold_table_from_string(const std::string& document);
void save_threshold_table(const ThresholdTable& table, const std::filesystem::path& path);
ThresholdTable load_threshold_table(const std::filesystem::path& path);

inline constexpr const char* kEvalReportHeader =
    "setup_id,alpha,fdr,tpr,coverage,accept_count,valid,non_trivial,auroc,ks_global,ks_within_bin";

void write_eval_reports(std::ostream& out, std::span<const EvalReport> reports);
std::vector<EvalReport> parse_eval_reports(std::istream& in);

std::string read_text_file(const std::filesystem::path& path);
// Writes via a temporary sibling and rename so readers never see partial output.
void write_text_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace safevpr::data_io
