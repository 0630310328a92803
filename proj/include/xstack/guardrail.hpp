#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "xstack/text.hpp"

namespace xstack {

struct ProtectedProfile {
  std::string entity_id;
  std::string canonical_name;
  std::vector<std::string> aliases;
  std::vector<double> visual;   // unit norm
  std::vector<double> textual;  // unit norm
  bool protected_flag = true;
  // Free-text attribute phrases ("chief engineer", "acme labs", ...).
  std::vector<std::string> attributes;

  void validate() const;
};

using ProfileSpan = std::span<const ProtectedProfile>;

nlohmann::json profiles_to_json(ProfileSpan profiles);
std::vector<ProtectedProfile> profiles_from_json(const nlohmann::json& j);

struct EntityMention {
  std::string entity_id;
  std::string matched_form;  // normalised name or alias
  std::size_t begin = 0;     // source byte range
  std::size_t end = 0;
  bool protected_entity = false;
};

// Dictionary + alias lookup over normalised text with token boundaries.
// Longer forms also match with separators squeezed out ("T.a.n.a.k.a"),
// provided the match starts and ends on token boundaries.
std::vector<EntityMention> extract_entities(std::string_view text, ProfileSpan profiles);

struct QueryProfile {
  std::optional<std::vector<double>> visual;
  std::optional<std::vector<double>> textual;
};

// alpha * cos(visual) + (1 - alpha) * cos(textual), a missing channel
// contributing 0; clamped to [-1, 1]. Throws InvalidArgument when both
// channels are missing or a width mismatches.
double profile_similarity(const QueryProfile& query, const ProtectedProfile& entity, double alpha);

// Runtime observation accompanying a candidate output.
struct Observation {
  std::optional<std::vector<double>> visual;  // embedding forwarded by sensing
  std::optional<double> timestamp_ms;
};

struct TriggerWeights {
  double name = 0.5;
  double similarity = 0.4;
  double attribute = 0.2;
  double cadence = 0.1;
};

struct GuardrailConfig {
  double initial_risk = 0.0;
  double tau = 0.5;         // risk threshold
  double delta = 0.6;       // similarity threshold
  double alpha_sim = 0.6;   // visual weight in profile similarity
  double rho = 0.8;         // risk decay
  TriggerWeights weights;
  double threshold_min = 0.1;
  double threshold_max = 0.9;
  double tighten_step = 0.05;  // on a false negative
  double loosen_step = 0.02;   // on a false positive
  std::string refusal_text = "I can't share information about that person.";
  std::vector<std::string> sensitive_keywords = {"home address", "address", "lives", "phone number", "email",
                                                 "workplace", "employer", "schedule", "salary", "birthday",
                                                 "daughter", "son", "password", "school"};
  double rapid_turn_ms = 2000.0;
  std::size_t history_window = 1;  // previous turns folded into the textual query
  std::size_t text_dim = 64;
  std::uint64_t text_seed = 0;

  void validate() const;
};

GuardrailConfig guardrail_config_from_json(const nlohmann::json& j);
nlohmann::json guardrail_config_to_json(const GuardrailConfig& c);

enum class ReleaseAction { pass, sanitize, safe_message };
enum class MatchKind { name, similarity };

const char* to_string(ReleaseAction a);
const char* to_string(MatchKind k);

struct MatchedEntity {
  std::string entity_id;
  MatchKind kind = MatchKind::name;
  double score = 0.0;
};

struct ReleaseDecision {
  ReleaseAction action = ReleaseAction::pass;
  std::string released_text;
  std::vector<MatchedEntity> matched;
  double risk_before = 0.0;
  double risk_after = 0.0;
};

struct AuditRecord {
  std::size_t turn = 0;
  std::string candidate_hash;
  ReleaseAction action = ReleaseAction::pass;
  std::vector<MatchedEntity> matched;
  double risk_before = 0.0;
  double risk_after = 0.0;
  double tau = 0.0;
  double delta = 0.0;
  std::string released_text;
};

nlohmann::json audit_to_json(const AuditRecord& r);
AuditRecord audit_from_json(const nlohmann::json& j);

struct SessionTurn {
  std::string candidate;
  std::string released;
  ReleaseAction action = ReleaseAction::pass;
};

using ConsentContext = std::map<std::string, std::string>;

struct TriggerSet {
  bool name = false;
  bool similarity = false;
  bool attribute = false;
  bool cadence = false;
};

enum class FeedbackLabel { none, false_positive, false_negative };
FeedbackLabel parse_feedback_label(std::string_view s);
const char* to_string(FeedbackLabel l);

struct ThresholdFeedback {
  FeedbackLabel tau = FeedbackLabel::none;
  FeedbackLabel delta = FeedbackLabel::none;
};

class GuardrailSession;
struct TriggerReport;
ReleaseDecision release(GuardrailSession& session, std::string_view candidate, const Observation& o,
                        ProfileSpan profiles);
double update_risk(GuardrailSession& session, const TriggerSet& triggers);
std::pair<double, double> update_thresholds(GuardrailSession& session, const ThresholdFeedback& feedback);

// Dialogue state (history, risk, consent context) plus adaptive thresholds.
class GuardrailSession {
 public:
  GuardrailSession(std::string id, GuardrailConfig config, ConsentContext context);

  const std::string& id() const { return id_; }
  const GuardrailConfig& config() const { return config_; }
  const ConsentContext& context() const { return context_; }
  const std::vector<SessionTurn>& history() const { return history_; }
  const std::vector<AuditRecord>& audit_log() const { return audit_; }
  double risk() const { return risk_; }
  double tau() const { return tau_; }
  double delta() const { return delta_; }
  bool closed() const { return closed_; }
  void close() { closed_ = true; }

 private:
  friend ReleaseDecision release(GuardrailSession&, std::string_view, const Observation&, ProfileSpan);
  friend double update_risk(GuardrailSession&, const TriggerSet&);
  friend std::pair<double, double> update_thresholds(GuardrailSession&, const ThresholdFeedback&);
  friend TriggerReport detect_triggers(const GuardrailSession&, std::string_view, const Observation&, ProfileSpan);

  std::string id_;
  GuardrailConfig config_;
  ConsentContext context_;
  std::vector<SessionTurn> history_;
  std::vector<AuditRecord> audit_;
  double risk_ = 0.0;
  double tau_ = 0.5;
  double delta_ = 0.6;
  std::optional<double> last_timestamp_ms_;
  bool closed_ = false;
};

// Throws InvalidArgument on out-of-range configuration. Ids are unique per
// process unless one is supplied.
GuardrailSession create_session(const GuardrailConfig& config, ConsentContext context = {},
                                std::optional<std::string> id = std::nullopt);

QueryProfile build_query_profile(const GuardrailSession& session, std::string_view candidate, const Observation& o);

struct TriggerReport {
  TriggerSet fired;
  std::vector<EntityMention> mentions;        // every entity, protected or not
  std::vector<MatchedEntity> protected_hits;  // name and similarity matches on protected entities
  std::vector<std::pair<std::size_t, std::size_t>> attribute_spans;
};

TriggerReport detect_triggers(const GuardrailSession& session, std::string_view candidate, const Observation& o,
                              ProfileSpan profiles);

// r <- clamp(rho * r + sum_j w_j * fired_j, 0, 1)
double update_risk(GuardrailSession& session, const TriggerSet& triggers);
double update_risk(GuardrailSession& session, std::string_view candidate, const Observation& o, ProfileSpan profiles);

// False negative tightens (threshold - tighten_step), false positive loosens
// (threshold + loosen_step); both clamped to [threshold_min, threshold_max].
std::pair<double, double> update_thresholds(GuardrailSession& session, const ThresholdFeedback& feedback);

// Replaces each flagged source span with "[REDACTED]"; overlapping spans are
// merged first. Bytes outside the spans are preserved.
std::string sanitize(std::string_view text, std::vector<std::pair<std::size_t, std::size_t>> spans);

inline constexpr std::string_view kRedacted = "[REDACTED]";

// Release policy: protected name/similarity match -> refusal; else risk above
// tau -> sanitised text; else the candidate verbatim. Updates risk and
// appends to history and the audit log afterwards.
ReleaseDecision release(GuardrailSession& session, std::string_view candidate, const Observation& o,
                        ProfileSpan profiles);

struct SafetyVerdict {
  bool holds = true;
  std::vector<std::size_t> violating_turns;
};

// Re-extracts entities from every released text; holds iff none is protected.
SafetyVerdict check_safety_invariant(std::span<const std::string> released, ProfileSpan profiles);
SafetyVerdict check_safety_invariant(std::span<const AuditRecord> log, ProfileSpan profiles);

}  // namespace xstack
