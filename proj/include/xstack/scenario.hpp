#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace xstack {

enum class Channel { photo_link, social_app, sms, phone_call };
enum class TurnTag { direct_name, alias, attribute_probe, benign };

const char* to_string(Channel c);
const char* to_string(TurnTag t);
Channel parse_channel(const std::string& s);
TurnTag parse_turn_tag(const std::string& s);

inline constexpr Channel kChannels[] = {Channel::photo_link, Channel::social_app, Channel::sms, Channel::phone_call};

struct SensingEvent {
  std::string identity_id;
  // Captured face embedding; synthesised from the population when absent.
  std::optional<std::vector<double>> embedding;
  double timestamp_ms = 0.0;
};

// One scripted adversary message. Text may use {target.name},
// {target.alias}, {target.handle} and {target.first} placeholders. The
// optional branch is sent next only when this turn was refused.
struct ScriptTurn {
  TurnTag tag = TurnTag::benign;
  std::string text;
  std::optional<double> timestamp_ms;
  std::shared_ptr<ScriptTurn> on_refusal;
};

struct Scenario {
  std::string name;
  Channel channel = Channel::photo_link;
  std::string target;  // identity the adversary is after
  std::vector<SensingEvent> sensing_events;
  std::vector<ScriptTurn> dialogue;

  // Throws ConfigError on empty names, a missing target or non-increasing
  // sensing timestamps.
  void validate() const;
};

Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const Scenario& s);

Scenario load_scenario(const std::filesystem::path& path);
// Every *.json file in `dir`, sorted by file name. Throws ConfigError when
// the directory holds none.
std::vector<Scenario> load_scenarios(const std::filesystem::path& dir);

}  // namespace xstack
