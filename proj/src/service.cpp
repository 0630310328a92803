#include "xstack/service.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>

#include "httplib.h"
#include "xstack/error.hpp"

namespace xstack {
namespace {

struct HttpError : Error {
  int status;
  std::string code;
  HttpError(int status, std::string code, const std::string& message)
      : Error(message), status(status), code(std::move(code)) {}
};

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::size_t i = 0;
  while (i < path.size()) {
    while (i < path.size() && path[i] == '/') ++i;
    const std::size_t j = path.find('/', i);
    const std::size_t end = j == std::string::npos ? path.size() : j;
    if (end > i) parts.push_back(path.substr(i, end - i));
    i = end;
  }
  return parts;
}

nlohmann::json matched_json(const std::vector<MatchedEntity>& matched) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& m : matched)
    out.push_back({{"entityId", m.entity_id}, {"matchKind", to_string(m.kind)}, {"score", m.score}});
  return out;
}

}  // namespace

nlohmann::json session_state_json(const GuardrailSession& s) {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& t : s.history())
    history.push_back({{"candidate", t.candidate}, {"released", t.released}, {"action", to_string(t.action)}});
  nlohmann::json audit = nlohmann::json::array();
  for (const auto& a : s.audit_log()) audit.push_back(audit_to_json(a));
  return {{"sessionId", s.id()},
          {"risk", s.risk()},
          {"tau", s.tau()},
          {"delta", s.delta()},
          {"closed", s.closed()},
          {"context", s.context()},
          {"history", history},
          {"audit", audit}};
}

nlohmann::json decision_json(const ReleaseDecision& d, const GuardrailSession& s) {
  return {{"turn", s.audit_log().size() - 1},
          {"action", to_string(d.action)},
          {"releasedText", d.released_text},
          {"matchedEntities", matched_json(d.matched)},
          {"riskBefore", d.risk_before},
          {"riskAfter", d.risk_after},
          {"risk", s.risk()},
          {"tau", s.tau()},
          {"delta", s.delta()}};
}

Service::Service(ServiceConfig config)
    : guardrail_(std::move(config.guardrail)),
      whitelist_(std::move(config.whitelist)),
      acl_tau_(config.acl_tau),
      audit_dir_(std::move(config.audit_dir)) {
  guardrail_.validate();
  for (const auto& p : config.profiles) p.validate();
  profiles_ = std::make_shared<const std::vector<ProtectedProfile>>(std::move(config.profiles));
  whitelist_.freeze();
  if (audit_dir_) std::filesystem::create_directories(*audit_dir_);
}

std::size_t Service::live_sessions() const {
  std::shared_lock lock(mutex_);
  std::size_t n = 0;
  for (const auto& [id, e] : sessions_) {
    std::lock_guard session_lock(e->mutex);
    if (!e->session.closed()) ++n;
  }
  return n;
}

std::shared_ptr<Service::Entry> Service::find(const std::string& id) const {
  std::shared_lock lock(mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw HttpError(404, "not_found", "no session " + id);
  return it->second;
}

std::shared_ptr<const std::vector<ProtectedProfile>> Service::profiles() const {
  std::shared_lock lock(mutex_);
  return profiles_;
}

void Service::append_audit(const std::string& session_id, const AuditRecord& record) const {
  if (!audit_dir_) return;
  std::string name = session_id;
  for (char& c : name)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  std::ofstream out(*audit_dir_ / (name + ".jsonl"), std::ios::app);
  out << audit_to_json(record).dump() << '\n';
}

nlohmann::json Service::create_session(const nlohmann::json& body) {
  ConsentContext context;
  if (body.contains("context")) context = body["context"].get<ConsentContext>();
  const std::string id = "s" + std::to_string(++next_session_);
  auto entry = std::make_shared<Entry>(xstack::create_session(guardrail_, std::move(context), id));
  auto state = session_state_json(entry->session);
  std::unique_lock lock(mutex_);
  sessions_.emplace(id, std::move(entry));
  return state;
}

nlohmann::json Service::submit_turn(const std::string& id, const nlohmann::json& body) {
  const auto entry = find(id);
  if (!body.contains("text") || !body["text"].is_string()) throw HttpError(400, "bad_request", "turn needs a text field");
  Observation o;
  if (body.contains("visual") && !body["visual"].is_null()) o.visual = body["visual"].get<std::vector<double>>();
  if (body.contains("timestamp") && !body["timestamp"].is_null()) o.timestamp_ms = body["timestamp"].get<double>();
  const auto profs = profiles();
  std::lock_guard lock(entry->mutex);
  const auto d = release(entry->session, body["text"].get<std::string>(), o, *profs);
  append_audit(id, entry->session.audit_log().back());
  return decision_json(d, entry->session);
}

nlohmann::json Service::session_state(const std::string& id) {
  const auto entry = find(id);
  std::lock_guard lock(entry->mutex);
  return session_state_json(entry->session);
}

nlohmann::json Service::submit_feedback(const std::string& id, const nlohmann::json& body) {
  const auto entry = find(id);
  ThresholdFeedback fb;
  if (body.contains("tau")) fb.tau = parse_feedback_label(body["tau"].get<std::string>());
  if (body.contains("delta")) fb.delta = parse_feedback_label(body["delta"].get<std::string>());
  std::lock_guard lock(entry->mutex);
  if (entry->session.closed()) throw StateError("session " + id + " is closed");
  const auto [tau, delta] = update_thresholds(entry->session, fb);
  return {{"sessionId", id}, {"tau", tau}, {"delta", delta}, {"risk", entry->session.risk()}};
}

nlohmann::json Service::close_session(const std::string& id) {
  const auto entry = find(id);
  std::lock_guard lock(entry->mutex);
  entry->session.close();
  return session_state_json(entry->session);
}

nlohmann::json Service::acl_check(const nlohmann::json& body) const {
  if (!body.contains("embedding")) throw HttpError(400, "bad_request", "acl check needs an embedding");
  const auto z = body["embedding"].get<std::vector<double>>();
  const auto d = decide(z, whitelist_, acl_tau_);
  return {{"grant", d.grant},
          {"matchedId", d.matched_id ? nlohmann::json(*d.matched_id) : nlohmann::json(nullptr)},
          {"similarity", d.similarity},
          {"threshold", d.threshold},
          {"latencyUs", d.latency_us}};
}

nlohmann::json Service::list_profiles() const { return {{"profiles", profiles_to_json(*profiles())}}; }

nlohmann::json Service::update_profiles(const nlohmann::json& body) {
  if (!body.contains("profiles")) throw HttpError(400, "bad_request", "update needs a profiles array");
  auto updated = std::make_shared<const std::vector<ProtectedProfile>>(profiles_from_json(body["profiles"]));
  std::unique_lock lock(mutex_);
  for (const auto& [id, e] : sessions_) {
    std::lock_guard session_lock(e->mutex);
    if (!e->session.closed())
      throw HttpError(409, "sessions_live", "profiles cannot change while session " + id + " is live");
  }
  profiles_ = std::move(updated);
  return {{"profiles", profiles_to_json(*profiles_)}};
}

ServiceResponse Service::handle(const std::string& method, const std::string& path, const std::string& body,
                                const std::string& request_id) {
  ServiceResponse r;
  const std::string rid = request_id.empty() ? "req-" + std::to_string(++next_request_) : request_id;
  try {
    const nlohmann::json in = body.empty() ? nlohmann::json::object() : nlohmann::json::parse(body);
    if (!in.is_object()) throw HttpError(400, "bad_request", "request body must be a JSON object");
    const auto parts = split_path(path);
    nlohmann::json payload;
    if (method == "POST" && parts.size() == 1 && parts[0] == "sessions") {
      payload = create_session(in);
    } else if (parts.size() >= 2 && parts[0] == "sessions") {
      const std::string& id = parts[1];
      if (method == "GET" && parts.size() == 2) payload = session_state(id);
      else if (method == "POST" && parts.size() == 3 && parts[2] == "turns") payload = submit_turn(id, in);
      else if (method == "POST" && parts.size() == 3 && parts[2] == "feedback") payload = submit_feedback(id, in);
      else if (method == "POST" && parts.size() == 3 && parts[2] == "close") payload = close_session(id);
      else throw HttpError(404, "not_found", "no route " + method + " " + path);
    } else if (method == "POST" && parts.size() == 2 && parts[0] == "acl" && parts[1] == "check") {
      payload = acl_check(in);
    } else if (parts.size() == 1 && parts[0] == "profiles" && method == "GET") {
      payload = list_profiles();
    } else if (parts.size() == 1 && parts[0] == "profiles" && (method == "PUT" || method == "POST")) {
      payload = update_profiles(in);
    } else {
      throw HttpError(404, "not_found", "no route " + method + " " + path);
    }
    r.body = {{"requestId", rid}, {"payload", payload}};
  } catch (const HttpError& e) {
    r.status = e.status;
    r.body = {{"requestId", rid}, {"error", {{"code", e.code}, {"message", e.what()}}}};
  } catch (const StateError& e) {
    r.status = 409;
    r.body = {{"requestId", rid}, {"error", {{"code", "conflict"}, {"message", e.what()}}}};
  } catch (const Error& e) {
    r.status = 400;
    r.body = {{"requestId", rid}, {"error", {{"code", "bad_request"}, {"message", e.what()}}}};
  } catch (const nlohmann::json::exception& e) {
    r.status = 400;
    r.body = {{"requestId", rid}, {"error", {{"code", "bad_request"}, {"message", e.what()}}}};
  } catch (const std::exception& e) {
    r.status = 500;
    r.body = {{"requestId", rid}, {"error", {{"code", "internal"}, {"message", e.what()}}}};
  }
  return r;
}

std::pair<std::string, int> bind_address_from_env() {
  const char* env = std::getenv("XSTACK_BIND");
  std::string spec = env && *env ? env : "127.0.0.1:8080";
  const auto colon = spec.rfind(':');
  if (colon == std::string::npos) throw ConfigError("XSTACK_BIND must be host:port, got " + spec);
  int port = 0;
  try {
    port = std::stoi(spec.substr(colon + 1));
  } catch (const std::exception&) {
    throw ConfigError("XSTACK_BIND has a bad port: " + spec);
  }
  if (port < 0 || port > 65535) throw ConfigError("XSTACK_BIND port out of range: " + spec);
  return {spec.substr(0, colon), port};
}

void serve_http(Service& service, const std::string& host, int port) {
  httplib::Server server;
  auto route = [&service](const httplib::Request& req, httplib::Response& res) {
    const auto r = service.handle(req.method, req.path, req.body, req.get_header_value("X-Request-Id"));
    res.status = r.status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(r.body.dump(), "application/json");
  };
  server.Get(".*", route);
  server.Post(".*", route);
  server.Put(".*", route);
  server.Options(".*", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type, X-Request-Id");
    res.status = 204;
  });
  if (!server.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
  if (!server.listen_after_bind()) throw Error("server stopped unexpectedly");
}

}  // namespace xstack
