#include "xstack/scenario.hpp"

#include <algorithm>

#include "xstack/checkpoint.hpp"
#include "xstack/error.hpp"

namespace xstack {

const char* to_string(Channel c) {
  switch (c) {
    case Channel::photo_link: return "photoLink";
    case Channel::social_app: return "socialApp";
    case Channel::sms: return "sms";
    case Channel::phone_call: return "phoneCall";
  }
  return "?";
}

const char* to_string(TurnTag t) {
  switch (t) {
    case TurnTag::direct_name: return "direct-name";
    case TurnTag::alias: return "alias";
    case TurnTag::attribute_probe: return "attribute-probe";
    case TurnTag::benign: return "benign";
  }
  return "?";
}

Channel parse_channel(const std::string& s) {
  for (Channel c : kChannels)
    if (s == to_string(c)) return c;
  throw ConfigError("unknown channel: " + s);
}

TurnTag parse_turn_tag(const std::string& s) {
  for (TurnTag t : {TurnTag::direct_name, TurnTag::alias, TurnTag::attribute_probe, TurnTag::benign})
    if (s == to_string(t)) return t;
  throw ConfigError("unknown turn tag: " + s);
}

void Scenario::validate() const {
  if (name.empty()) throw ConfigError("scenario has no name");
  if (target.empty()) throw ConfigError("scenario '" + name + "' has no target");
  for (std::size_t i = 1; i < sensing_events.size(); ++i)
    if (!(sensing_events[i].timestamp_ms > sensing_events[i - 1].timestamp_ms))
      throw ConfigError("scenario '" + name + "': sensing timestamps must be strictly increasing");
  for (const auto& e : sensing_events)
    if (e.identity_id.empty()) throw ConfigError("scenario '" + name + "': sensing event without identity");
}

namespace {

ScriptTurn turn_from_json(const nlohmann::json& j) {
  ScriptTurn t;
  t.tag = parse_turn_tag(j.at("tag").get<std::string>());
  t.text = j.at("text").get<std::string>();
  if (j.contains("timestamp")) t.timestamp_ms = j["timestamp"].get<double>();
  if (j.contains("on_refusal") && !j["on_refusal"].is_null())
    t.on_refusal = std::make_shared<ScriptTurn>(turn_from_json(j["on_refusal"]));
  return t;
}

nlohmann::json turn_to_json(const ScriptTurn& t) {
  nlohmann::json j = {{"tag", to_string(t.tag)}, {"text", t.text}};
  if (t.timestamp_ms) j["timestamp"] = *t.timestamp_ms;
  if (t.on_refusal) j["on_refusal"] = turn_to_json(*t.on_refusal);
  return j;
}

}  // namespace

Scenario scenario_from_json(const nlohmann::json& j) {
  try {
    Scenario s;
    s.name = j.at("name").get<std::string>();
    s.channel = parse_channel(j.at("channel").get<std::string>());
    s.target = j.at("target").get<std::string>();
    for (const auto& e : j.value("sensing_events", nlohmann::json::array())) {
      SensingEvent ev;
      ev.identity_id = e.at("identity").get<std::string>();
      if (e.contains("embedding")) ev.embedding = e["embedding"].get<std::vector<double>>();
      ev.timestamp_ms = e.at("timestamp").get<double>();
      s.sensing_events.push_back(std::move(ev));
    }
    for (const auto& t : j.at("dialogue")) s.dialogue.push_back(turn_from_json(t));
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed scenario: ") + e.what());
  }
}

nlohmann::json scenario_to_json(const Scenario& s) {
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : s.sensing_events) {
    nlohmann::json ej = {{"identity", e.identity_id}, {"timestamp", e.timestamp_ms}};
    if (e.embedding) ej["embedding"] = *e.embedding;
    events.push_back(ej);
  }
  nlohmann::json dialogue = nlohmann::json::array();
  for (const auto& t : s.dialogue) dialogue.push_back(turn_to_json(t));
  return {{"name", s.name},
          {"channel", to_string(s.channel)},
          {"target", s.target},
          {"sensing_events", events},
          {"dialogue", dialogue}};
}

Scenario load_scenario(const std::filesystem::path& path) { return scenario_from_json(read_json_file(path)); }

std::vector<Scenario> load_scenarios(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ConfigError("scenario directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("no scenario files in " + dir.string());
  std::vector<Scenario> out;
  for (const auto& f : files) out.push_back(load_scenario(f));
  return out;
}

}  // namespace xstack
