#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "json.hpp"
#include "xstack/acl.hpp"
#include "xstack/guardrail.hpp"

namespace xstack {

struct ServiceConfig {
  GuardrailConfig guardrail;
  std::vector<ProtectedProfile> profiles;
  Whitelist whitelist;
  double acl_tau = 0.75;
  // One append-only JSONL audit file per session when set.
  std::optional<std::filesystem::path> audit_dir;
};

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;  // {requestId, payload} or {requestId, error: {code, message}}
};

// Transport-independent request handler. Requests against different
// sessions run concurrently; requests against one session are serialised.
//
//   POST /sessions                 {context?}                  -> session state
//   POST /sessions/{id}/turns      {text, visual?, timestamp?} -> decision + r, tau, delta
//   GET  /sessions/{id}                                        -> state, history, audit log
//   POST /sessions/{id}/feedback   {tau?, delta?}              -> thresholds
//   POST /sessions/{id}/close                                  -> state
//   POST /acl/check                {embedding}                 -> AclDecision
//   GET  /profiles                                             -> profiles
//   PUT  /profiles                 {profiles}                  -> refused while sessions are live
class Service {
 public:
  explicit Service(ServiceConfig config);

  ServiceResponse handle(const std::string& method, const std::string& path, const std::string& body,
                         const std::string& request_id = {});

  std::size_t live_sessions() const;

 private:
  struct Entry {
    std::mutex mutex;
    GuardrailSession session;
    explicit Entry(GuardrailSession s) : session(std::move(s)) {}
  };

  nlohmann::json create_session(const nlohmann::json& body);
  nlohmann::json submit_turn(const std::string& id, const nlohmann::json& body);
  nlohmann::json session_state(const std::string& id);
  nlohmann::json submit_feedback(const std::string& id, const nlohmann::json& body);
  nlohmann::json close_session(const std::string& id);
  nlohmann::json acl_check(const nlohmann::json& body) const;
  nlohmann::json list_profiles() const;
  nlohmann::json update_profiles(const nlohmann::json& body);

  std::shared_ptr<Entry> find(const std::string& id) const;
  std::shared_ptr<const std::vector<ProtectedProfile>> profiles() const;
  void append_audit(const std::string& session_id, const AuditRecord& record) const;

  GuardrailConfig guardrail_;
  Whitelist whitelist_;
  double acl_tau_;
  std::optional<std::filesystem::path> audit_dir_;

  mutable std::shared_mutex mutex_;  // guards sessions_ and profiles_
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::shared_ptr<const std::vector<ProtectedProfile>> profiles_;
  std::atomic<std::uint64_t> next_session_{0};
  std::atomic<std::uint64_t> next_request_{0};
};

nlohmann::json session_state_json(const GuardrailSession& s);
nlohmann::json decision_json(const ReleaseDecision& d, const GuardrailSession& s);

// Bind address from XSTACK_BIND ("host:port"), default 127.0.0.1:8080.
std::pair<std::string, int> bind_address_from_env();

// Blocks serving HTTP until the process stops. Throws Error when the
// address cannot be bound.
void serve_http(Service& service, const std::string& host, int port);

}  // namespace xstack
