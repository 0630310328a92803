#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "xstack/model.hpp"

namespace xstack {

inline constexpr int kCheckpointFormatVersion = 1;

// Hex-float text ("0x1.8p+1"); round-trips every finite double bit-exactly.
std::string encode_real(double v);
// Accepts hex-float strings as written by encode_real, or plain JSON numbers.
double decode_real(const nlohmann::json& j);

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

nlohmann::json model_to_json(const ToyModel& model);
ToyModel model_from_json(const nlohmann::json& j);

nlohmann::json adapters_to_json(const ToyModel& model, const std::vector<PartialLinearAdapter>& adapters);
std::vector<PartialLinearAdapter> adapters_from_json(const ToyModel& model, const nlohmann::json& j);

void save_model(const ToyModel& model, const std::filesystem::path& path);
ToyModel load_model(const std::filesystem::path& path);

nlohmann::json read_json_file(const std::filesystem::path& path);
// Writes `j` with two-space indentation and a trailing newline.
void write_json_file(const nlohmann::json& j, const std::filesystem::path& path);
void write_text_file(const std::string& text, const std::filesystem::path& path);

}  // namespace xstack
