#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include "doctest.h"
#include "fuzz.hpp"
#include "xstack/population.hpp"
#include "xstack/service.hpp"

using namespace xstack;
using nlohmann::json;

namespace {

ServiceConfig config_for(const Population& pop) {
  ServiceConfig c;
  c.profiles = pop.profiles;
  for (const auto& p : pop.profiles)
    if (!p.protected_flag) c.whitelist.enroll(p.entity_id, p.visual);
  return c;
}

std::string new_session(Service& s) {
  const auto r = s.handle("POST", "/sessions", "");
  REQUIRE(r.status == 200);
  return r.body["payload"]["sessionId"].get<std::string>();
}

json turn(Service& s, const std::string& id, const std::string& text, const json& extra = json::object()) {
  json body = extra;
  body["text"] = text;
  const auto r = s.handle("POST", "/sessions/" + id + "/turns", body.dump());
  REQUIRE(r.status == 200);
  return r.body["payload"];
}

}  // namespace

TEST_CASE("session lifecycle: protected name is refused") {
  const auto pop = generate_population(6, 7);
  Service svc(config_for(pop));
  const auto id = new_session(svc);
  CHECK(svc.live_sessions() == 1);

  const auto d = turn(svc, id, "The person is " + pop.profiles[0].canonical_name + ".");
  CHECK(d["action"] == "safeMessage");
  CHECK(d["releasedText"] == GuardrailConfig{}.refusal_text);
  CHECK(d["matchedEntities"][0]["entityId"] == pop.profiles[0].entity_id);

  const auto ok = turn(svc, id, "The weather is fine.");
  CHECK(ok["releasedText"].is_string());

  const auto state = svc.handle("GET", "/sessions/" + id, "");
  REQUIRE(state.status == 200);
  CHECK(state.body["payload"]["history"].size() == 2);
  CHECK(state.body["payload"]["audit"].size() == 2);

  CHECK(svc.handle("POST", "/sessions/" + id + "/close", "").status == 200);
  CHECK(svc.live_sessions() == 0);
  CHECK(svc.handle("POST", "/sessions/" + id + "/turns", R"({"text":"hi"})").status == 409);
}

TEST_CASE("feedback: false negative lowers tau by 0.05") {
  const auto pop = generate_population(4, 1);
  Service svc(config_for(pop));
  const auto id = new_session(svc);
  const auto r = svc.handle("POST", "/sessions/" + id + "/feedback", R"({"tau":"falseNegative"})");
  REQUIRE(r.status == 200);
  CHECK(r.body["payload"]["tau"].get<double>() == doctest::Approx(0.45));
  CHECK(svc.handle("POST", "/sessions/" + id + "/feedback", R"({"tau":"sometimes"})").status == 400);
}

TEST_CASE("errors: malformed json, unknown session, unknown route") {
  const auto pop = generate_population(4, 1);
  Service svc(config_for(pop));
  const auto bad = svc.handle("POST", "/sessions", "{not json", "rid-1");
  CHECK(bad.status == 400);
  CHECK(bad.body["requestId"] == "rid-1");
  CHECK(bad.body["error"]["code"] == "bad_request");
  CHECK(bad.body["error"]["message"].is_string());

  const auto missing = svc.handle("GET", "/sessions/nope", "");
  CHECK(missing.status == 404);
  CHECK(missing.body["error"]["code"] == "not_found");
  CHECK(svc.handle("DELETE", "/sessions", "").status == 404);
  CHECK(svc.handle("POST", "/sessions", "[1,2]").status == 400);

  const auto id = new_session(svc);
  CHECK(svc.handle("POST", "/sessions/" + id + "/turns", R"({"txt":"x"})").status == 400);
}

TEST_CASE("acl check endpoint") {
  const auto pop = generate_population(6, 7);
  Service svc(config_for(pop));
  const json unprotected = {{"embedding", pop.profiles[5].visual}};
  const auto g = svc.handle("POST", "/acl/check", unprotected.dump());
  REQUIRE(g.status == 200);
  CHECK(g.body["payload"]["grant"] == true);
  CHECK(g.body["payload"]["matchedId"] == pop.profiles[5].entity_id);

  const json protected_face = {{"embedding", pop.profiles[0].visual}};
  const auto d = svc.handle("POST", "/acl/check", protected_face.dump());
  REQUIRE(d.status == 200);
  CHECK(d.body["payload"]["grant"] == false);
  CHECK(svc.handle("POST", "/acl/check", "{}").status == 400);
}

TEST_CASE("profiles: update refused while sessions are live") {
  const auto pop = generate_population(6, 7);
  Service svc(config_for(pop));
  const json update = {{"profiles", profiles_to_json(generate_population(4, 2).profiles)}};
  const auto id = new_session(svc);
  const auto refused = svc.handle("PUT", "/profiles", update.dump());
  CHECK(refused.status == 409);
  CHECK(svc.handle("GET", "/profiles", "").body["payload"]["profiles"].size() == 6);
  svc.handle("POST", "/sessions/" + id + "/close", "");
  CHECK(svc.handle("PUT", "/profiles", update.dump()).status == 200);
  CHECK(svc.handle("GET", "/profiles", "").body["payload"]["profiles"].size() == 4);
}

TEST_CASE("concurrency: parallel sessions equal their serial replay") {
  const auto pop = generate_population(10, 11);
  constexpr int kSessions = 8, kTurns = 60;
  std::vector<std::vector<json>> scripts(kSessions);
  for (int s = 0; s < kSessions; ++s) {
    fuzz::Generator gen(pop, 100 + s);
    for (int t = 0; t < kTurns; ++t) {
      const auto tt = gen.next();
      json body = {{"text", tt.text}};
      if (tt.observation.visual) body["visual"] = *tt.observation.visual;
      if (tt.observation.timestamp_ms) body["timestamp"] = *tt.observation.timestamp_ms;
      scripts[s].push_back(body);
    }
  }
  auto digest = [](Service& svc, const std::string& id) {
    const auto st = svc.handle("GET", "/sessions/" + id, "").body["payload"];
    return json{st["history"], st["audit"], st["risk"], st["tau"]}.dump();
  };

  Service parallel(config_for(pop));
  std::vector<std::string> ids;
  for (int s = 0; s < kSessions; ++s) ids.push_back(new_session(parallel));
  std::vector<std::thread> threads;
  std::atomic<int> failures{0};
  for (int s = 0; s < kSessions; ++s)
    threads.emplace_back([&, s] {
      for (const auto& body : scripts[s])
        if (parallel.handle("POST", "/sessions/" + ids[s] + "/turns", body.dump()).status != 200) ++failures;
    });
  // a reader hammering the profile list at the same time
  threads.emplace_back([&] {
    for (int i = 0; i < 200; ++i)
      if (parallel.handle("GET", "/profiles", "").status != 200) ++failures;
  });
  for (auto& t : threads) t.join();
  CHECK(failures == 0);

  for (int s = 0; s < kSessions; ++s) {
    Service serial(config_for(pop));
    const auto id = new_session(serial);
    for (const auto& body : scripts[s]) serial.handle("POST", "/sessions/" + id + "/turns", body.dump());
    CHECK(digest(parallel, ids[s]) == digest(serial, id));
  }
}

TEST_CASE("audit directory gets one jsonl line per turn") {
  const auto pop = generate_population(4, 1);
  auto c = config_for(pop);
  const auto dir = std::filesystem::temp_directory_path() / ("xstack_audit_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  c.audit_dir = dir;
  Service svc(c);
  const auto id = new_session(svc);
  turn(svc, id, "hello");
  turn(svc, id, pop.profiles[0].canonical_name);
  std::ifstream in(dir / (id + ".jsonl"));
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    const auto j = json::parse(line);
    CHECK(j["turn"] == n);
    ++n;
  }
  CHECK(n == 2);
  std::filesystem::remove_all(dir);
}

TEST_CASE("bind address from environment") {
  ::setenv("XSTACK_BIND", "0.0.0.0:9099", 1);
  CHECK(bind_address_from_env() == std::pair<std::string, int>{"0.0.0.0", 9099});
  ::setenv("XSTACK_BIND", "nope", 1);
  CHECK_THROWS(bind_address_from_env());
  ::unsetenv("XSTACK_BIND");
  CHECK(bind_address_from_env().second == 8080);
}
