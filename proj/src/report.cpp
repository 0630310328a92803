#include "xstack/report.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "xstack/checkpoint.hpp"
#include "xstack/error.hpp"
#include "xstack/hash.hpp"

namespace xstack {

namespace {

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

}  // namespace

LikertSummary aggregate_likert(std::span<const std::size_t> counts) {
  if (counts.size() != 5) throw InvalidArgument("Likert aggregation needs five counts (scores 5..1)");
  LikertSummary s;
  std::copy(counts.begin(), counts.end(), s.counts.begin());
  s.total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  if (s.total == 0) throw InvalidArgument("Likert aggregation over zero responses");
  const double n = static_cast<double>(s.total);
  double sum = 0.0;
  for (std::size_t i = 0; i < 5; ++i) sum += static_cast<double>(5 - i) * static_cast<double>(counts[i]);
  s.mean = sum / n;
  double ss = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    const double d = static_cast<double>(5 - i) - s.mean;
    ss += d * d * static_cast<double>(counts[i]);
  }
  s.sigma = std::sqrt(ss / n);
  for (std::size_t i = 0; i < 5; ++i) s.percentages[i] = round_to(100.0 * static_cast<double>(counts[i]) / n, 1);
  return s;
}

std::array<std::size_t, 5> likert_counts(std::span<const double> scores) {
  std::array<std::size_t, 5> counts{};
  for (double v : scores) {
    if (!(v >= 1.0 && v <= 5.0)) throw InvalidArgument("score outside [1, 5]");
    const auto point = static_cast<std::size_t>(std::lround(v));
    ++counts[5 - point];
  }
  return counts;
}

double relative_reduction(double before, double after) {
  if (!(before > 0.0)) throw InvalidArgument("relative reduction needs a positive baseline");
  return 100.0 * (before - after) / before;
}

double round_to(double v, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::round(v * scale) / scale;
}

std::string format_duration_ms(double ms) {
  if (ms < 1000.0) return fmt("%.1fms", ms);
  return fmt("%.1f s", ms / 1000.0);
}

std::string format_mean_sd(double mean, double sd, int decimals) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.*f±%.*f", decimals, mean, decimals, sd);
  return buf;
}

std::string render_likert_row(const std::string& label, const LikertSummary& s) {
  std::string out = label;
  for (double p : s.percentages) out += " & " + fmt("%.1f", p);
  out += " & " + fmt("%.2f", s.mean) + " & " + fmt("%.2f", s.sigma);
  return out;
}

LatencyRow latency_row(std::string approach, std::string component, double min_ms, double max_ms, double p90_ms,
                       double avg_ms) {
  LatencyRow row{std::move(approach), std::move(component), {min_ms, max_ms, p90_ms, avg_ms, avg_ms <= p90_ms}};
  return row;
}

std::string render_latency_row(const LatencyRow& row) {
  // continuation rows of a group leave the approach column blank
  return (row.approach.empty() ? "& " : row.approach + " & ") + row.component + " & " + format_duration_ms(row.stats.min) + " & " +
         format_duration_ms(row.stats.max) + " & " + format_duration_ms(row.stats.p90) + " & " +
         format_duration_ms(row.stats.avg);
}

std::vector<std::string> latency_warnings(std::span<const LatencyRow> rows) {
  std::vector<std::string> out;
  for (const auto& r : rows)
    if (r.stats.avg > r.stats.p90)
      out.push_back(r.approach + "/" + r.component + ": average " + format_duration_ms(r.stats.avg) +
                    " exceeds P90 " + format_duration_ms(r.stats.p90) + " (inconsistent with a nearest-rank P90 "
                    "unless the distribution is extremely heavy-tailed)");
  return out;
}

std::string render_ablation_row(const AblationRow& row) {
  return row.condition + " & " + format_mean_sd(row.mean, row.sigma);
}

namespace {

nlohmann::json likert_to_json(const LikertSummary& s) {
  return {{"counts", s.counts}, {"total", s.total}, {"mean", s.mean}, {"sigma", s.sigma}, {"percentages", s.percentages}};
}

LikertSummary likert_from_json(const nlohmann::json& j) {
  LikertSummary s;
  s.counts = j.at("counts").get<std::array<std::size_t, 5>>();
  s.total = j.at("total").get<std::size_t>();
  s.mean = j.at("mean").get<double>();
  s.sigma = j.at("sigma").get<double>();
  s.percentages = j.at("percentages").get<std::array<double, 5>>();
  return s;
}

nlohmann::json outcome_to_json(const ScenarioOutcome& o) {
  return {{"scenario", o.scenario},
          {"channel", o.channel},
          {"condition", o.condition},
          {"seed", o.seed},
          {"turns", o.turns},
          {"refusals", o.refusals},
          {"sanitized", o.sanitized},
          {"leakage", o.leakage},
          {"protected_events", o.protected_events},
          {"forwarded_protected", o.forwarded_protected},
          {"recognized_protected", o.recognized_protected},
          {"disclosed_facts", o.disclosed_facts},
          {"total_facts", o.total_facts},
          {"score", o.score}};
}

ScenarioOutcome outcome_from_json(const nlohmann::json& j) {
  ScenarioOutcome o;
  o.scenario = j.at("scenario").get<std::string>();
  o.channel = j.at("channel").get<std::string>();
  o.condition = j.at("condition").get<std::string>();
  o.seed = j.at("seed").get<std::uint64_t>();
  o.turns = j.at("turns").get<std::size_t>();
  o.refusals = j.at("refusals").get<std::size_t>();
  o.sanitized = j.at("sanitized").get<std::size_t>();
  o.leakage = j.at("leakage").get<std::size_t>();
  o.protected_events = j.at("protected_events").get<std::size_t>();
  o.forwarded_protected = j.at("forwarded_protected").get<std::size_t>();
  o.recognized_protected = j.at("recognized_protected").get<std::size_t>();
  o.disclosed_facts = j.at("disclosed_facts").get<std::size_t>();
  o.total_facts = j.at("total_facts").get<std::size_t>();
  o.score = j.at("score").get<double>();
  return o;
}

}  // namespace

nlohmann::json report_to_json(const PipelineReport& r) {
  nlohmann::json channels = nlohmann::json::array();
  for (const auto& c : r.channels)
    channels.push_back({{"condition", c.condition}, {"channel", c.channel}, {"likert", likert_to_json(c.likert)}});
  nlohmann::json ablation = nlohmann::json::array();
  for (const auto& a : r.ablation)
    ablation.push_back({{"condition", a.condition},
                        {"runs", a.runs},
                        {"mean", a.mean},
                        {"sigma", a.sigma},
                        {"leakage", a.leakage},
                        {"block_rate", a.block_rate}});
  nlohmann::json outcomes = nlohmann::json::array();
  for (const auto& o : r.outcomes) outcomes.push_back(outcome_to_json(o));
  return {{"schema_version", r.schema_version},
          {"label", r.label},
          {"seeds", r.seeds},
          {"channels", channels},
          {"ablation", ablation},
          {"outcomes", outcomes},
          {"leakage_count", r.leakage_count},
          {"block_rate", r.block_rate},
          {"warnings", r.warnings}};
}

nlohmann::json latency_to_json(const std::map<std::string, LatencyStats>& latency) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [stage, s] : latency)
    out[stage] = {{"min_ms", s.min}, {"max_ms", s.max}, {"p90_ms", s.p90}, {"avg_ms", s.avg},
                  {"avg_within_p90", s.avg_within_p90}};
  return out;
}

PipelineReport report_from_json(const nlohmann::json& j, const nlohmann::json& latency) {
  try {
    PipelineReport r;
    r.schema_version = j.at("schema_version").get<int>();
    if (r.schema_version != kReportSchemaVersion)
      throw ConfigError("unsupported report schema version " + std::to_string(r.schema_version));
    r.label = j.at("label").get<std::string>();
    r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    for (const auto& c : j.at("channels"))
      r.channels.push_back({c.at("condition").get<std::string>(), c.at("channel").get<std::string>(),
                            likert_from_json(c.at("likert"))});
    for (const auto& a : j.at("ablation"))
      r.ablation.push_back({a.at("condition").get<std::string>(), a.at("runs").get<std::size_t>(),
                            a.at("mean").get<double>(), a.at("sigma").get<double>(),
                            a.at("leakage").get<std::size_t>(), a.at("block_rate").get<double>()});
    for (const auto& o : j.at("outcomes")) r.outcomes.push_back(outcome_from_json(o));
    r.leakage_count = j.at("leakage_count").get<std::size_t>();
    r.block_rate = j.at("block_rate").get<double>();
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    for (const auto& [stage, s] : latency.items())
      r.latency[stage] = {s.at("min_ms").get<double>(), s.at("max_ms").get<double>(), s.at("p90_ms").get<double>(),
                          s.at("avg_ms").get<double>(), s.at("avg_within_p90").get<bool>()};
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed report: ") + e.what());
  }
}

std::string channels_csv(const PipelineReport& r) {
  std::ostringstream out;
  out << "condition,channel,n,pct5,pct4,pct3,pct2,pct1,mean,sigma\n";
  for (const auto& c : r.channels) {
    out << c.condition << ',' << c.channel << ',' << c.likert.total;
    for (double p : c.likert.percentages) out << ',' << fmt("%.1f", p);
    out << ',' << fmt("%.4f", c.likert.mean) << ',' << fmt("%.4f", c.likert.sigma) << '\n';
  }
  return out.str();
}

std::string ablation_csv(const PipelineReport& r) {
  std::ostringstream out;
  out << "condition,runs,mean,sigma,leakage,block_rate\n";
  for (const auto& a : r.ablation)
    out << a.condition << ',' << a.runs << ',' << fmt("%.4f", a.mean) << ',' << fmt("%.4f", a.sigma) << ','
        << a.leakage << ',' << fmt("%.4f", a.block_rate) << '\n';
  return out.str();
}

std::string outcomes_csv(const PipelineReport& r) {
  std::ostringstream out;
  out << "scenario,channel,condition,seed,turns,refusals,sanitized,leakage,protected_events,forwarded_protected,"
         "recognized_protected,disclosed_facts,total_facts,score\n";
  for (const auto& o : r.outcomes)
    out << o.scenario << ',' << o.channel << ',' << o.condition << ',' << o.seed << ',' << o.turns << ','
        << o.refusals << ',' << o.sanitized << ',' << o.leakage << ',' << o.protected_events << ','
        << o.forwarded_protected << ',' << o.recognized_protected << ',' << o.disclosed_facts << ','
        << o.total_facts << ',' << fmt("%.4f", o.score) << '\n';
  return out.str();
}

EmittedReport emit_report(const PipelineReport& r, const std::filesystem::path& dir) {
  EmittedReport e{dir / "report.json", dir / "channels.csv", dir / "ablation.csv", dir / "outcomes.csv",
                  dir / "latency.json", ""};
  const std::string body = report_to_json(r).dump(2) + "\n";
  write_text_file(body, e.report_json);
  write_text_file(channels_csv(r), e.channels_csv);
  write_text_file(ablation_csv(r), e.ablation_csv);
  write_text_file(outcomes_csv(r), e.outcomes_csv);
  write_json_file(latency_to_json(r.latency), e.latency_json);
  e.report_hash = sha256_hex(body);
  return e;
}

PipelineReport load_report(const std::filesystem::path& dir) {
  const auto latency_path = dir / "latency.json";
  const nlohmann::json latency =
      std::filesystem::exists(latency_path) ? read_json_file(latency_path) : nlohmann::json::object();
  return report_from_json(read_json_file(dir / "report.json"), latency);
}

}  // namespace xstack
