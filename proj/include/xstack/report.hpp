#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "xstack/stats.hpp"

namespace xstack {

// Five-point Likert distribution; index 0 holds the count for score 5,
// index 4 the count for score 1.
struct LikertSummary {
  std::array<std::size_t, 5> counts{};
  std::size_t total = 0;
  double mean = 0.0;
  double sigma = 0.0;                  // population standard deviation
  std::array<double, 5> percentages{};  // one decimal

  bool operator==(const LikertSummary&) const = default;
};

// Throws InvalidArgument when the span is not five counts or sums to zero.
LikertSummary aggregate_likert(std::span<const std::size_t> counts_5_to_1);

// Scores in [1, 5] rounded to the nearest point and tallied.
std::array<std::size_t, 5> likert_counts(std::span<const double> scores);

// 100 * (before - after) / before. Throws InvalidArgument when before <= 0.
double relative_reduction(double before, double after);

double round_to(double v, int decimals);

// "64.5ms" below one second, "30.2 s" from one second up.
std::string format_duration_ms(double ms);
// "4.30±0.69"
std::string format_mean_sd(double mean, double sd, int decimals = 2);

// "Photo Link & 40.0 & 53.3 & 3.3 & 3.3 & 0.0 & 4.30 & 0.69"
std::string render_likert_row(const std::string& label, const LikertSummary& s);

struct LatencyRow {
  std::string approach;
  std::string component;
  LatencyStats stats;  // milliseconds

  bool operator==(const LatencyRow&) const = default;
};

// Builds a row from externally supplied figures; avg_within_p90 is derived.
LatencyRow latency_row(std::string approach, std::string component, double min_ms, double max_ms, double p90_ms,
                       double avg_ms);

// "baseline & AR & 64.5ms & 95.1ms & 92.4ms & 80.6ms"
std::string render_latency_row(const LatencyRow& row);
// One warning per row whose average exceeds its P90.
std::vector<std::string> latency_warnings(std::span<const LatencyRow> rows);

struct ChannelScores {
  std::string condition;
  std::string channel;
  LikertSummary likert;

  bool operator==(const ChannelScores&) const = default;
};

struct AblationRow {
  std::string condition;
  std::size_t runs = 0;
  double mean = 0.0;
  double sigma = 0.0;
  std::size_t leakage = 0;
  double block_rate = 0.0;

  bool operator==(const AblationRow&) const = default;
};

// "full & 1.12±0.32" style rendering of the ablation column.
std::string render_ablation_row(const AblationRow& row);

// Per scenario run summary (simulation rubric, see pipeline.hpp).
struct ScenarioOutcome {
  std::string scenario;
  std::string channel;
  std::string condition;
  std::uint64_t seed = 0;
  std::size_t turns = 0;
  std::size_t refusals = 0;
  std::size_t sanitized = 0;
  std::size_t leakage = 0;
  std::size_t protected_events = 0;
  std::size_t forwarded_protected = 0;
  std::size_t recognized_protected = 0;
  std::size_t disclosed_facts = 0;
  std::size_t total_facts = 0;
  double score = 1.0;

  bool operator==(const ScenarioOutcome&) const = default;
};

inline constexpr int kReportSchemaVersion = 1;

struct PipelineReport {
  int schema_version = kReportSchemaVersion;
  std::string label;
  std::vector<std::uint64_t> seeds;
  std::vector<ChannelScores> channels;
  std::vector<AblationRow> ablation;
  std::vector<ScenarioOutcome> outcomes;
  std::size_t leakage_count = 0;
  double block_rate = 0.0;
  std::vector<std::string> warnings;
  // Wall-clock stage latencies. Kept out of report.json so that the report
  // stays byte-identical across runs; emitted as latency.json.
  std::map<std::string, LatencyStats> latency;

  bool operator==(const PipelineReport&) const = default;
};

nlohmann::json report_to_json(const PipelineReport& r);  // without latency
nlohmann::json latency_to_json(const std::map<std::string, LatencyStats>& latency);
PipelineReport report_from_json(const nlohmann::json& report, const nlohmann::json& latency);

struct EmittedReport {
  std::filesystem::path report_json;
  std::filesystem::path channels_csv;
  std::filesystem::path ablation_csv;
  std::filesystem::path outcomes_csv;
  std::filesystem::path latency_json;
  std::string report_hash;  // SHA-256 of report.json
};

// Writes report.json, channels.csv, ablation.csv, outcomes.csv and
// latency.json into `dir`.
EmittedReport emit_report(const PipelineReport& r, const std::filesystem::path& dir);
PipelineReport load_report(const std::filesystem::path& dir);

std::string channels_csv(const PipelineReport& r);
std::string ablation_csv(const PipelineReport& r);
std::string outcomes_csv(const PipelineReport& r);

}  // namespace xstack
