#include "xstack/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "xstack/error.hpp"
#include "xstack/gradients.hpp"
#include "xstack/hash.hpp"

namespace xstack {
namespace {

enum class Branch { fisher, integrated_gradients };

BranchScores path_scores(const ToyModel& model, const LabeledBatch& forget, std::size_t steps,
                         std::span<const std::size_t> layers, Branch branch) {
  if (steps == 0) throw InvalidArgument("integration steps must be at least 1");
  if (forget.inputs.rows == 0) throw InvalidArgument("forget set is empty");
  for (std::size_t l : layers)
    if (l >= model.layers.size()) throw InvalidArgument("scored layer index out of range");

  BranchScores out;
  out.steps = steps;
  for (std::size_t l : layers) {
    const auto& layer = model.layers[l];
    out.accumulator[l] = {Matrix(layer.out_width(), layer.in_width()), std::vector<double>(layer.out_width(), 0.0)};
  }
  if (layers.empty()) return out;

  const SupervisedLossSpec loss{forget.targets};
  auto accumulate = [branch](double& acc, double g) { acc += branch == Branch::fisher ? g * g : std::abs(g); };
  for (std::size_t s = 1; s <= steps; ++s) {
    const double alpha = static_cast<double>(s) / static_cast<double>(steps);
    const auto grads = param_gradients(scaled(model, alpha), {}, forget.inputs, loss, GradientScope::parameters);
    for (auto& [l, acc] : out.accumulator) {
      const auto& g = grads.layers[l];
      for (std::size_t i = 0; i < g.weights.data.size(); ++i) accumulate(acc.weights.data[i], g.weights.data[i]);
      for (std::size_t i = 0; i < g.bias.size(); ++i) accumulate(acc.bias[i], g.bias[i]);
    }
  }

  const double inv_m = 1.0 / static_cast<double>(steps);
  auto weight = [branch](double theta) { return branch == Branch::fisher ? theta * theta : std::abs(theta); };
  for (const auto& [l, acc] : out.accumulator) {
    const auto& layer = model.layers[l];
    LayerScores s = acc;
    for (std::size_t i = 0; i < s.weights.data.size(); ++i) s.weights.data[i] *= inv_m * weight(layer.weights.data[i]);
    for (std::size_t i = 0; i < s.bias.size(); ++i) s.bias[i] *= inv_m * weight(layer.bias[i]);
    out.scores[l] = std::move(s);
  }
  return out;
}

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

BranchScores integrated_fisher(const ToyModel& model, const LabeledBatch& forget, std::size_t steps) {
  const auto layers = model.layers_with_role(LayerRole::vision);
  return integrated_fisher(model, forget, steps, layers);
}

BranchScores integrated_fisher(const ToyModel& model, const LabeledBatch& forget, std::size_t steps,
                               std::span<const std::size_t> layers) {
  return path_scores(model, forget, steps, layers, Branch::fisher);
}

BranchScores integrated_gradients_text(const ToyModel& model, const LabeledBatch& forget, std::size_t steps) {
  const auto layers = model.layers_with_role(LayerRole::projector);
  return integrated_gradients_text(model, forget, steps, layers);
}

BranchScores integrated_gradients_text(const ToyModel& model, const LabeledBatch& forget, std::size_t steps,
                                       std::span<const std::size_t> layers) {
  return path_scores(model, forget, steps, layers, Branch::integrated_gradients);
}

std::vector<double> column_sums(const Matrix& m) {
  std::vector<double> sums(m.cols, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) sums[c] += m(r, c);
  return sums;
}

SensitivityReport combined_scores(const BranchScores& fisher, const BranchScores& ig, const ToyModel& model) {
  SensitivityReport report;
  report.steps = std::max(fisher.steps, ig.steps);
  report.fisher_accumulator = fisher.accumulator;
  report.gradient_accumulator = ig.accumulator;
  for (const auto& [l, s] : fisher.scores) report.per_param[l] = s;
  for (const auto& [l, s] : ig.scores) {
    if (report.per_param.count(l) != 0)
      throw ConfigError("layer " + model.layer_name(l) + " is scored by both sensitivity branches");
    report.per_param[l] = s;
  }
  for (const auto& [l, s] : report.per_param) {
    report.per_neuron[l] = column_sums(s.weights);
    report.layer_names[l] = model.layer_name(l);
  }
  return report;
}

std::size_t mask_size(double ratio, std::size_t d_in) {
  // Tolerance keeps ratios like 1/3 of 3 columns from flooring to 0.
  const auto k = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(d_in) + 1e-9));
  return std::min(d_in, std::max<std::size_t>(1, k));
}

std::vector<std::size_t> topk_indices(std::span<const double> scores, std::size_t count) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  count = std::min(count, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count), idx.end(),
                    [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); });
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

NeuronMask topk_mask(const SensitivityReport& report, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw InvalidArgument("top-K ratio must lie in (0, 1]");
  NeuronMask mask;
  mask.ratio = ratio;
  mask.report_hash = report_hash(report);
  for (const auto& [l, scores] : report.per_neuron)
    mask.per_layer[l] = topk_indices(scores, mask_size(ratio, scores.size()));
  return mask;
}

std::string export_heatmap(const SensitivityReport& report) {
  std::string out = "layer,row,scores\n";
  for (const auto& [l, s] : report.per_param) {
    const auto it = report.layer_names.find(l);
    const std::string name = it != report.layer_names.end() ? it->second : std::to_string(l);
    for (std::size_t r = 0; r < s.weights.rows; ++r) {
      out += name + "," + std::to_string(r);
      for (double v : s.weights.row(r)) out += "," + format_real(v);
      out += "\n";
    }
  }
  return out;
}

std::string report_hash(const SensitivityReport& report) {
  return sha256_hex(export_heatmap(report) + "steps=" + std::to_string(report.steps));
}

nlohmann::json mask_to_json(const NeuronMask& mask, const ToyModel& model) {
  nlohmann::json layers = nlohmann::json::object();
  for (const auto& [l, idx] : mask.per_layer) layers[model.layer_name(l)] = idx;
  return {{"k", mask.ratio}, {"report_hash", mask.report_hash}, {"layers", std::move(layers)}};
}

NeuronMask mask_from_json(const nlohmann::json& j, const ToyModel& model) {
  NeuronMask mask;
  mask.ratio = j.at("k").get<double>();
  mask.report_hash = j.value("report_hash", "");
  for (const auto& [name, idx] : j.at("layers").items()) {
    const auto layer = model.find_layer(name);
    if (!layer) throw ConfigError("mask references unknown layer " + name);
    mask.per_layer[*layer] = idx.get<std::vector<std::size_t>>();
  }
  return mask;
}

}  // namespace xstack
