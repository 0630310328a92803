#include "xstack/guardrail.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "xstack/error.hpp"
#include "xstack/hash.hpp"
#include "xstack/matrix.hpp"

namespace xstack {
namespace {

void require_unit(const std::vector<double>& v, const std::string& what) {
  if (v.empty()) return;
  if (std::abs(l2_norm(v) - 1.0) > 1e-9) throw InvalidArgument(what + " must be unit norm");
}

bool in_unit_interval_open(double v) { return v > 0.0 && v < 1.0; }

}  // namespace

void ProtectedProfile::validate() const {
  if (entity_id.empty()) throw InvalidArgument("profile entity id is empty");
  if (normalize(canonical_name).empty()) throw InvalidArgument("profile '" + entity_id + "' has no canonical name");
  require_unit(visual, "visual embedding of '" + entity_id + "'");
  require_unit(textual, "textual embedding of '" + entity_id + "'");
}

nlohmann::json profiles_to_json(ProfileSpan profiles) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : profiles)
    out.push_back({{"entity_id", p.entity_id},
                   {"canonical_name", p.canonical_name},
                   {"aliases", p.aliases},
                   {"visual", p.visual},
                   {"textual", p.textual},
                   {"protected", p.protected_flag},
                   {"attributes", p.attributes}});
  return out;
}

std::vector<ProtectedProfile> profiles_from_json(const nlohmann::json& j) {
  std::vector<ProtectedProfile> out;
  for (const auto& pj : j) {
    ProtectedProfile p;
    p.entity_id = pj.at("entity_id").get<std::string>();
    p.canonical_name = pj.at("canonical_name").get<std::string>();
    p.aliases = pj.value("aliases", std::vector<std::string>{});
    p.visual = pj.value("visual", std::vector<double>{});
    p.textual = pj.value("textual", std::vector<double>{});
    p.protected_flag = pj.value("protected", true);
    p.attributes = pj.value("attributes", std::vector<std::string>{});
    p.validate();
    out.push_back(std::move(p));
  }
  return out;
}

namespace {

// Normalised text with the separators squeezed out, remembering which
// characters start or end a token. Lets "t a n a k a" or "tan.aka" match
// "tanaka" as long as the match starts and ends on token boundaries.
struct CompactText {
  std::string text;
  std::vector<std::size_t> origin;  // index into the normalised text
  std::vector<bool> starts, ends;
};

CompactText compact(const std::string& norm) {
  CompactText c;
  for (std::size_t i = 0; i < norm.size(); ++i) {
    if (norm[i] == ' ') continue;
    c.text.push_back(norm[i]);
    c.origin.push_back(i);
    c.starts.push_back(i == 0 || norm[i - 1] == ' ');
    c.ends.push_back(i + 1 == norm.size() || norm[i + 1] == ' ');
  }
  return c;
}

std::string squeeze(const std::string& s) {
  std::string out;
  for (char ch : s)
    if (ch != ' ') out.push_back(ch);
  return out;
}

// Below this length a squeezed form is too likely to occur by accident.
constexpr std::size_t kMinCompactForm = 6;

}  // namespace

std::vector<EntityMention> extract_entities(std::string_view text, ProfileSpan profiles) {
  const NormalizedText norm = normalize_with_offsets(text);
  const CompactText squeezed = compact(norm.text);
  std::vector<EntityMention> out;
  auto add = [&](const ProtectedProfile& p, const std::string& form, std::size_t first, std::size_t last) {
    const std::size_t b = norm.source_begin[first], e = norm.source_end[last];
    for (const auto& m : out)
      if (m.entity_id == p.entity_id && m.begin == b && m.end == e) return;
    out.push_back({p.entity_id, form, b, e, p.protected_flag});
  };
  for (const auto& p : profiles) {
    std::vector<std::string> forms{normalize(p.canonical_name)};
    for (const auto& a : p.aliases) forms.push_back(normalize(a));
    for (const auto& form : forms) {
      if (form.empty()) continue;
      for (std::size_t pos : find_token_matches(norm.text, form)) add(p, form, pos, pos + form.size() - 1);
      const std::string sq = squeeze(form);
      if (sq.size() < kMinCompactForm) continue;
      for (std::size_t pos = squeezed.text.find(sq); pos != std::string::npos; pos = squeezed.text.find(sq, pos + 1)) {
        const std::size_t last = pos + sq.size() - 1;
        if (squeezed.starts[pos] && squeezed.ends[last]) add(p, form, squeezed.origin[pos], squeezed.origin[last]);
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const EntityMention& a, const EntityMention& b) {
    return std::tie(a.begin, b.end, a.entity_id) < std::tie(b.begin, a.end, b.entity_id);
  });
  return out;
}

double profile_similarity(const QueryProfile& query, const ProtectedProfile& entity, double alpha) {
  if (!query.visual && !query.textual) throw InvalidArgument("query profile has no channel");
  double s = 0.0;
  if (query.visual && !entity.visual.empty()) {
    if (query.visual->size() != entity.visual.size()) throw InvalidArgument("visual channel width mismatch");
    s += alpha * cosine(*query.visual, entity.visual);
  }
  if (query.textual && !entity.textual.empty()) {
    if (query.textual->size() != entity.textual.size()) throw InvalidArgument("textual channel width mismatch");
    s += (1.0 - alpha) * cosine(*query.textual, entity.textual);
  }
  return std::clamp(s, -1.0, 1.0);
}

void GuardrailConfig::validate() const {
  if (!(initial_risk >= 0.0 && initial_risk <= 1.0)) throw InvalidArgument("initial risk must lie in [0, 1]");
  if (!in_unit_interval_open(threshold_min) || !in_unit_interval_open(threshold_max) || threshold_min > threshold_max)
    throw InvalidArgument("threshold bounds must satisfy 0 < min <= max < 1");
  if (tau < threshold_min || tau > threshold_max) throw InvalidArgument("tau outside threshold bounds");
  if (delta < threshold_min || delta > threshold_max) throw InvalidArgument("delta outside threshold bounds");
  if (!(alpha_sim >= 0.0 && alpha_sim <= 1.0)) throw InvalidArgument("alpha_sim must lie in [0, 1]");
  if (!(rho >= 0.0 && rho < 1.0)) throw InvalidArgument("rho must lie in [0, 1)");
  if (weights.name < 0 || weights.similarity < 0 || weights.attribute < 0 || weights.cadence < 0)
    throw InvalidArgument("trigger weights must be non-negative");
  if (tighten_step < 0 || loosen_step < 0) throw InvalidArgument("threshold steps must be non-negative");
  if (text_dim == 0) throw InvalidArgument("text dimension must be positive");
  if (normalize(refusal_text).empty()) throw InvalidArgument("refusal text is blank");
}

GuardrailConfig guardrail_config_from_json(const nlohmann::json& j) {
  GuardrailConfig c;
  c.initial_risk = j.value("initial_risk", c.initial_risk);
  c.tau = j.value("tau", c.tau);
  c.delta = j.value("delta", c.delta);
  c.alpha_sim = j.value("alpha_sim", c.alpha_sim);
  c.rho = j.value("rho", c.rho);
  if (j.contains("weights")) {
    const auto& w = j["weights"];
    c.weights.name = w.value("name", c.weights.name);
    c.weights.similarity = w.value("similarity", c.weights.similarity);
    c.weights.attribute = w.value("attribute", c.weights.attribute);
    c.weights.cadence = w.value("cadence", c.weights.cadence);
  }
  c.threshold_min = j.value("threshold_min", c.threshold_min);
  c.threshold_max = j.value("threshold_max", c.threshold_max);
  c.tighten_step = j.value("tighten_step", c.tighten_step);
  c.loosen_step = j.value("loosen_step", c.loosen_step);
  c.refusal_text = j.value("refusal_text", c.refusal_text);
  c.sensitive_keywords = j.value("sensitive_keywords", c.sensitive_keywords);
  c.rapid_turn_ms = j.value("rapid_turn_ms", c.rapid_turn_ms);
  c.history_window = j.value("history_window", c.history_window);
  c.text_dim = j.value("text_dim", c.text_dim);
  c.text_seed = j.value("text_seed", c.text_seed);
  c.validate();
  return c;
}

nlohmann::json guardrail_config_to_json(const GuardrailConfig& c) {
  return {{"initial_risk", c.initial_risk},
          {"tau", c.tau},
          {"delta", c.delta},
          {"alpha_sim", c.alpha_sim},
          {"rho", c.rho},
          {"weights",
           {{"name", c.weights.name},
            {"similarity", c.weights.similarity},
            {"attribute", c.weights.attribute},
            {"cadence", c.weights.cadence}}},
          {"threshold_min", c.threshold_min},
          {"threshold_max", c.threshold_max},
          {"tighten_step", c.tighten_step},
          {"loosen_step", c.loosen_step},
          {"refusal_text", c.refusal_text},
          {"sensitive_keywords", c.sensitive_keywords},
          {"rapid_turn_ms", c.rapid_turn_ms},
          {"history_window", c.history_window},
          {"text_dim", c.text_dim},
          {"text_seed", c.text_seed}};
}

const char* to_string(ReleaseAction a) {
  switch (a) {
    case ReleaseAction::pass: return "pass";
    case ReleaseAction::sanitize: return "sanitize";
    case ReleaseAction::safe_message: return "safeMessage";
  }
  return "?";
}

const char* to_string(MatchKind k) { return k == MatchKind::name ? "name" : "similarity"; }

namespace {

ReleaseAction parse_action(const std::string& s) {
  if (s == "pass") return ReleaseAction::pass;
  if (s == "sanitize") return ReleaseAction::sanitize;
  if (s == "safeMessage") return ReleaseAction::safe_message;
  throw InvalidArgument("unknown release action: " + s);
}

nlohmann::json matched_to_json(const std::vector<MatchedEntity>& matched) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& m : matched) out.push_back({{"entity_id", m.entity_id}, {"kind", to_string(m.kind)}, {"score", m.score}});
  return out;
}

}  // namespace

nlohmann::json audit_to_json(const AuditRecord& r) {
  return {{"turn", r.turn},
          {"candidate_sha256", r.candidate_hash},
          {"action", to_string(r.action)},
          {"matched", matched_to_json(r.matched)},
          {"risk_before", r.risk_before},
          {"risk_after", r.risk_after},
          {"tau", r.tau},
          {"delta", r.delta},
          {"released_text", r.released_text}};
}

AuditRecord audit_from_json(const nlohmann::json& j) {
  AuditRecord r;
  r.turn = j.at("turn").get<std::size_t>();
  r.candidate_hash = j.at("candidate_sha256").get<std::string>();
  r.action = parse_action(j.at("action").get<std::string>());
  for (const auto& m : j.at("matched"))
    r.matched.push_back({m.at("entity_id").get<std::string>(),
                         m.at("kind").get<std::string>() == "name" ? MatchKind::name : MatchKind::similarity,
                         m.at("score").get<double>()});
  r.risk_before = j.at("risk_before").get<double>();
  r.risk_after = j.at("risk_after").get<double>();
  r.tau = j.at("tau").get<double>();
  r.delta = j.at("delta").get<double>();
  r.released_text = j.at("released_text").get<std::string>();
  return r;
}

GuardrailSession::GuardrailSession(std::string id, GuardrailConfig config, ConsentContext context)
    : id_(std::move(id)), config_(std::move(config)), context_(std::move(context)) {
  config_.validate();
  risk_ = config_.initial_risk;
  tau_ = config_.tau;
  delta_ = config_.delta;
}

GuardrailSession create_session(const GuardrailConfig& config, ConsentContext context, std::optional<std::string> id) {
  static std::atomic<std::uint64_t> counter{0};
  std::string session_id = id ? *id : "session-" + std::to_string(++counter);
  return GuardrailSession(std::move(session_id), config, std::move(context));
}

QueryProfile build_query_profile(const GuardrailSession& session, std::string_view candidate, const Observation& o) {
  QueryProfile q;
  q.visual = o.visual;
  std::vector<std::string> tokens = tokenize(candidate);
  const auto& history = session.history();
  const std::size_t window = std::min(session.config().history_window, history.size());
  for (std::size_t i = history.size() - window; i < history.size(); ++i) {
    const auto past = tokenize(history[i].candidate);
    tokens.insert(tokens.end(), past.begin(), past.end());
  }
  const HashTextEncoder encoder(session.config().text_dim, session.config().text_seed);
  q.textual = encoder.encode_tokens(tokens);
  return q;
}

TriggerReport detect_triggers(const GuardrailSession& session, std::string_view candidate, const Observation& o,
                              ProfileSpan profiles) {
  TriggerReport report;
  report.mentions = extract_entities(candidate, profiles);
  for (const auto& m : report.mentions) {
    if (!m.protected_entity) continue;
    report.fired.name = true;
    const bool seen = std::any_of(report.protected_hits.begin(), report.protected_hits.end(),
                                  [&](const MatchedEntity& h) { return h.entity_id == m.entity_id; });
    if (!seen) report.protected_hits.push_back({m.entity_id, MatchKind::name, 1.0});
  }

  const QueryProfile q = build_query_profile(session, candidate, o);
  if (q.visual || q.textual) {
    for (const auto& p : profiles) {
      if (!p.protected_flag) continue;
      const double s = profile_similarity(q, p, session.config().alpha_sim);
      if (s > session.delta_) {
        report.fired.similarity = true;
        report.protected_hits.push_back({p.entity_id, MatchKind::similarity, s});
      }
    }
  }

  const NormalizedText norm = normalize_with_offsets(candidate);
  for (const auto& kw : session.config().sensitive_keywords) {
    const std::string form = normalize(kw);
    for (std::size_t pos : find_token_matches(norm.text, form))
      report.attribute_spans.emplace_back(norm.source_begin[pos], norm.source_end[pos + form.size() - 1]);
  }
  report.fired.attribute = !report.attribute_spans.empty();

  if (o.timestamp_ms && session.last_timestamp_ms_)
    report.fired.cadence = *o.timestamp_ms - *session.last_timestamp_ms_ < session.config().rapid_turn_ms;
  return report;
}

double update_risk(GuardrailSession& session, const TriggerSet& t) {
  const auto& w = session.config().weights;
  double r = session.config().rho * session.risk_;
  if (t.name) r += w.name;
  if (t.similarity) r += w.similarity;
  if (t.attribute) r += w.attribute;
  if (t.cadence) r += w.cadence;
  session.risk_ = std::clamp(r, 0.0, 1.0);
  return session.risk_;
}

double update_risk(GuardrailSession& session, std::string_view candidate, const Observation& o, ProfileSpan profiles) {
  return update_risk(session, detect_triggers(session, candidate, o, profiles).fired);
}

FeedbackLabel parse_feedback_label(std::string_view s) {
  if (s == "none") return FeedbackLabel::none;
  if (s == "falsePositive") return FeedbackLabel::false_positive;
  if (s == "falseNegative") return FeedbackLabel::false_negative;
  throw InvalidArgument("unknown feedback label: " + std::string(s));
}

const char* to_string(FeedbackLabel l) {
  switch (l) {
    case FeedbackLabel::none: return "none";
    case FeedbackLabel::false_positive: return "falsePositive";
    case FeedbackLabel::false_negative: return "falseNegative";
  }
  return "?";
}

std::pair<double, double> update_thresholds(GuardrailSession& session, const ThresholdFeedback& feedback) {
  const auto& c = session.config();
  auto step = [&c](double value, FeedbackLabel label) {
    switch (label) {
      case FeedbackLabel::false_negative: value -= c.tighten_step; break;
      case FeedbackLabel::false_positive: value += c.loosen_step; break;
      case FeedbackLabel::none: return value;
    }
    return std::clamp(value, c.threshold_min, c.threshold_max);
  };
  session.tau_ = step(session.tau_, feedback.tau);
  session.delta_ = step(session.delta_, feedback.delta);
  return {session.tau_, session.delta_};
}

std::string sanitize(std::string_view text, std::vector<std::pair<std::size_t, std::size_t>> spans) {
  std::sort(spans.begin(), spans.end(), [](const auto& a, const auto& b) {
    return a.first < b.first || (a.first == b.first && a.second > b.second);
  });
  std::string out;
  std::size_t cursor = 0;
  std::size_t i = 0;
  while (i < spans.size()) {
    std::size_t begin = std::min(spans[i].first, text.size());
    std::size_t end = std::min(spans[i].second, text.size());
    for (++i; i < spans.size() && spans[i].first < end; ++i) end = std::max(end, std::min(spans[i].second, text.size()));
    if (begin < cursor) begin = cursor;
    if (begin >= end) continue;
    out.append(text.substr(cursor, begin - cursor));
    out.append(kRedacted);
    cursor = end;
  }
  out.append(text.substr(cursor));
  return out;
}

ReleaseDecision release(GuardrailSession& session, std::string_view candidate, const Observation& o,
                        ProfileSpan profiles) {
  if (session.closed_) throw StateError("session " + session.id_ + " is closed");
  const TriggerReport triggers = detect_triggers(session, candidate, o, profiles);

  ReleaseDecision d;
  d.risk_before = session.risk_;
  d.matched = triggers.protected_hits;
  if (!triggers.protected_hits.empty()) {
    d.action = ReleaseAction::safe_message;
    d.released_text = session.config_.refusal_text;
  } else if (session.risk_ > session.tau_) {
    d.action = ReleaseAction::sanitize;
    auto spans = triggers.attribute_spans;
    for (const auto& m : triggers.mentions) spans.emplace_back(m.begin, m.end);
    d.released_text = sanitize(candidate, std::move(spans));
  } else {
    d.action = ReleaseAction::pass;
    d.released_text = std::string(candidate);
  }

  const double tau_used = session.tau_;
  const double delta_used = session.delta_;
  d.risk_after = update_risk(session, triggers.fired);
  if (o.timestamp_ms) session.last_timestamp_ms_ = o.timestamp_ms;

  session.history_.push_back({std::string(candidate), d.released_text, d.action});
  session.audit_.push_back({session.audit_.size(), sha256_hex(candidate), d.action, d.matched, d.risk_before,
                            d.risk_after, tau_used, delta_used, d.released_text});
  return d;
}

SafetyVerdict check_safety_invariant(std::span<const std::string> released, ProfileSpan profiles) {
  SafetyVerdict v;
  for (std::size_t t = 0; t < released.size(); ++t) {
    const auto mentions = extract_entities(released[t], profiles);
    if (std::any_of(mentions.begin(), mentions.end(), [](const EntityMention& m) { return m.protected_entity; })) {
      v.holds = false;
      v.violating_turns.push_back(t);
    }
  }
  return v;
}

SafetyVerdict check_safety_invariant(std::span<const AuditRecord> log, ProfileSpan profiles) {
  std::vector<std::string> released;
  released.reserve(log.size());
  for (const auto& r : log) released.push_back(r.released_text);
  SafetyVerdict v = check_safety_invariant(released, profiles);
  for (auto& t : v.violating_turns) t = log[t].turn;
  return v;
}

}  // namespace xstack
