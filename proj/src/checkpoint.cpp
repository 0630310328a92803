#include "xstack/checkpoint.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "xstack/error.hpp"

namespace xstack {

using nlohmann::json;

std::string encode_real(double v) {
  if (!std::isfinite(v)) throw NumericError("cannot encode a non-finite real");
  char buf[64];
  const bool neg = std::signbit(v);
  auto res = std::to_chars(buf, buf + sizeof buf, std::abs(v), std::chars_format::hex);
  return std::string(neg ? "-0x" : "0x") + std::string(buf, res.ptr);
}

double decode_real(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (!j.is_string()) throw ConfigError("expected a real number or hex-float string");
  std::string s = j.get<std::string>();
  bool neg = false;
  std::size_t pos = 0;
  if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
    neg = s[0] == '-';
    pos = 1;
  }
  if (s.compare(pos, 2, "0x") != 0 && s.compare(pos, 2, "0X") != 0)
    throw ConfigError("malformed hex-float: " + s);
  pos += 2;
  double v = 0.0;
  auto res = std::from_chars(s.data() + pos, s.data() + s.size(), v, std::chars_format::hex);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ConfigError("malformed hex-float: " + s);
  return neg ? -v : v;
}

json matrix_to_json(const Matrix& m) {
  json data = json::array();
  for (double v : m.data) data.push_back(encode_real(v));
  return {{"rows", m.rows}, {"cols", m.cols}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const json& j) {
  Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  const auto& data = j.at("data");
  if (data.size() != m.data.size()) throw ConfigError("matrix data length does not equal rows x cols");
  for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = decode_real(data[i]);
  return m;
}

namespace {

LayerRole parse_role(const std::string& s) {
  if (s == "vision") return LayerRole::vision;
  if (s == "projector") return LayerRole::projector;
  if (s == "head") return LayerRole::head;
  throw ConfigError("unknown layer role: " + s);
}

Activation parse_activation(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation: " + s);
}

}  // namespace

json model_to_json(const ToyModel& model) {
  json layers = json::array();
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& l = model.layers[i];
    json bias = json::array();
    for (double b : l.bias) bias.push_back(encode_real(b));
    layers.push_back({{"name", model.layer_name(i)},
                      {"role", to_string(model.roles[i])},
                      {"activation", to_string(l.activation)},
                      {"weights", matrix_to_json(l.weights)},
                      {"bias", std::move(bias)}});
  }
  return {{"format_version", kCheckpointFormatVersion},
          {"seed", model.seed},
          {"feature_tap", model.feature_tap},
          {"layers", std::move(layers)}};
}

ToyModel model_from_json(const json& j) {
  if (j.at("format_version").get<int>() != kCheckpointFormatVersion)
    throw ConfigError("unsupported checkpoint format version");
  ToyModel m;
  m.seed = j.at("seed").get<std::uint64_t>();
  m.feature_tap = j.at("feature_tap").get<std::size_t>();
  for (const auto& lj : j.at("layers")) {
    DenseLayer l;
    l.weights = matrix_from_json(lj.at("weights"));
    for (const auto& b : lj.at("bias")) l.bias.push_back(decode_real(b));
    l.activation = parse_activation(lj.at("activation").get<std::string>());
    m.layers.push_back(std::move(l));
    m.roles.push_back(parse_role(lj.at("role").get<std::string>()));
  }
  m.validate();
  return m;
}

json adapters_to_json(const ToyModel& model, const std::vector<PartialLinearAdapter>& adapters) {
  json out = json::array();
  for (const auto& a : adapters)
    out.push_back({{"layer", model.layer_name(a.layer)}, {"columns", a.columns}, {"delta", matrix_to_json(a.delta)}});
  return out;
}

std::vector<PartialLinearAdapter> adapters_from_json(const ToyModel& model, const json& j) {
  std::vector<PartialLinearAdapter> out;
  for (const auto& aj : j) {
    const auto name = aj.at("layer").get<std::string>();
    const auto layer = model.find_layer(name);
    if (!layer) throw ConfigError("adapter references unknown layer " + name);
    auto a = PartialLinearAdapter::zeros(model, *layer, aj.at("columns").get<std::vector<std::size_t>>());
    Matrix delta = matrix_from_json(aj.at("delta"));
    if (!delta.same_shape(a.delta)) throw ConfigError("adapter delta shape mismatch for " + name);
    a.delta = std::move(delta);
    out.push_back(std::move(a));
  }
  return out;
}

void save_model(const ToyModel& model, const std::filesystem::path& path) {
  write_json_file(model_to_json(model), path);
}

ToyModel load_model(const std::filesystem::path& path) { return model_from_json(read_json_file(path)); }

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_text_file(const std::string& text, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

void write_json_file(const json& j, const std::filesystem::path& path) { write_text_file(j.dump(2) + "\n", path); }

}  // namespace xstack
