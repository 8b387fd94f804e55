#pragma once

// Orchestrates the three evaluation tiers over a manifest and writes the
// tables, confusion heatmaps and the JSON run record.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cve/cas.hpp"
#include "cve/judge.hpp"
#include "cve/pixelmetrics.hpp"

namespace cve::report {

class ConfigError : public Error {
public:
    using Error::Error;
};

struct TierToggles {
    bool pixel = true;
    bool cas = true;
    bool judge = true;
    bool operator==(const TierToggles&) const = default;
};

struct CasSettings {
    std::size_t epochs = 10;
    std::size_t batch = 32;
    double lr = 1e-4;
    std::uint64_t seed = 0;
    /// Manifest whose street features train the head; the evaluated manifest when unset.
    std::optional<std::filesystem::path> train_manifest;
    /// Externally produced predictions; replaces the trained head when set.
    std::optional<std::filesystem::path> pred_labels;
    bool operator==(const CasSettings&) const = default;
};

struct JudgeSettings {
    bool stub = true;
    std::string endpoint;  // falls back to CVE_API_URL
    std::string model = "gemini-2.5-flash";
    std::filesystem::path cache_dir;
    std::string rubric_version = judge::kDefaultRubric;
    std::size_t max_in_flight = 4;
    std::size_t max_edge = 512;
    double requests_per_second = 4.0;
    bool operator==(const JudgeSettings&) const = default;
};

/// Paths are absolute once loaded; relative paths in the file resolve
/// against the config file's directory.
struct RunConfig {
    std::filesystem::path manifest;
    std::vector<std::string> methods;  // empty: every method in the manifest
    std::filesystem::path features_dir;
    std::filesystem::path output_dir;
    TierToggles tiers;
    CasSettings cas;
    JudgeSettings judge;

    bool operator==(const RunConfig&) const = default;
};

RunConfig run_config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
nlohmann::json run_config_to_json(const RunConfig& config);
/// Throws ConfigError on unreadable or invalid files.
RunConfig load_run_config(const std::filesystem::path& path);
/// Referenced paths exist, at least one tier is enabled, methods are known.
void validate(const RunConfig& config);

struct Tier1Summary {
    std::string method;
    std::size_t evaluated = 0;
    std::size_t failed = 0;
    double ssim = 0.0;
    double psnr_db = 0.0;
    std::optional<double> lpips;
    std::optional<double> fid;
    bool operator==(const Tier1Summary&) const = default;
};

struct Tier2Summary {
    std::string method;
    std::size_t evaluated = 0;
    std::size_t failed = 0;
    cas::CasReport report;
    bool operator==(const Tier2Summary&) const = default;
};

struct Tier3Summary {
    std::string method;
    std::size_t evaluated = 0;
    std::size_t failed = 0;
    judge::MeanScores scores;
    bool operator==(const Tier3Summary&) const = default;
};

struct VerdictRow {
    std::string pair_id;
    std::string method;
    int structural = 0, damage = 0, realism = 0;
    std::string source;
    bool operator==(const VerdictRow&) const = default;
};

struct PairError {
    std::string tier;
    std::string method;
    std::string pair_id;
    std::string message;
    bool operator==(const PairError&) const = default;
};

inline constexpr int kRecordSchemaVersion = 1;
inline constexpr const char* kGroundTruthRow = "Ground Truth";

struct RunRecord {
    int schema_version = kRecordSchemaVersion;
    std::string tool_version;
    RunConfig config;
    std::string rubric_version;
    std::vector<pixel::PixelMetricRow> tier1_rows;
    std::optional<std::vector<Tier1Summary>> table1;
    std::optional<std::vector<Tier2Summary>> table2;
    std::optional<std::vector<Tier3Summary>> table3;
    std::vector<VerdictRow> verdicts;
    std::vector<PairError> errors;
    /// Wall-clock seconds per tier and in total; the only run-dependent field.
    std::map<std::string, double> timings;

    bool operator==(const RunRecord&) const = default;
};

nlohmann::json record_to_json(const RunRecord& record);
RunRecord record_from_json(const nlohmann::json& doc);
/// Writes via a temporary file and rename.
void write_record(const std::filesystem::path& path, const RunRecord& record);
RunRecord read_record(const std::filesystem::path& path);

/// Runs the enabled tiers. Per-pair failures land in record.errors; config
/// problems throw ConfigError before any work starts. Nothing is written.
RunRecord run_all(const RunConfig& config);

/// Tables as CSV and Markdown, tier1_rows.csv and judge_verdicts.csv for the
/// tiers present in the record. Returns the written paths.
std::vector<std::filesystem::path> emit_tables(const RunRecord& record, const std::filesystem::path& out_dir);

/// confusion_<method>.csv and .svg per Table II row; throws DomainError when
/// the record has no CAS tier.
std::vector<std::filesystem::path> emit_confusion_figures(const RunRecord& record,
                                                          const std::filesystem::path& out_dir);

/// Self-contained SVG heatmap of the row-normalized matrix.
std::string confusion_svg(const std::string& title, const cas::ConfusionMatrix& matrix);

/// Cell text: fixed decimals, "inf" for infinities, "n/a" when absent.
std::string format_cell(std::optional<double> value, int decimals);

/// run_all, then the record, tables and figures under config.output_dir.
/// Returns the process exit code: 0 clean, 2 when pair errors were recorded.
int run_and_emit(const RunConfig& config);

}  // namespace cve::report
