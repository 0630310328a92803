#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "xstack/matrix.hpp"
#include "xstack/model.hpp"

namespace xstack {

// Inputs plus per-sample supervised targets (one-hot labels for the toy task).
struct LabeledBatch {
  Matrix inputs;
  Matrix targets;
};

struct LayerScores {
  Matrix weights;            // same shape as the layer's weights
  std::vector<double> bias;  // scored, never maskable
};

using ScoreStore = std::map<std::size_t, LayerScores>;

// One branch of the path-integrated analysis.
struct BranchScores {
  ScoreStore scores;       // final per-parameter scores
  ScoreStore accumulator;  // raw sum over the path (sum of G*G or |G|)
  std::size_t steps = 0;
};

// Integrated Fisher information over the path theta' = (s/m) theta,
// s = 1..m. score = (1/m) * sum_s G_s^2 * theta^2.
// Defaults to the model's vision layers.
BranchScores integrated_fisher(const ToyModel& model, const LabeledBatch& forget, std::size_t steps);
BranchScores integrated_fisher(const ToyModel& model, const LabeledBatch& forget, std::size_t steps,
                               std::span<const std::size_t> layers);

// Integrated-gradients attribution over the same path.
// score = (1/m) * sum_s |G_s| * |theta|. Defaults to the projector layers.
BranchScores integrated_gradients_text(const ToyModel& model, const LabeledBatch& forget, std::size_t steps);
BranchScores integrated_gradients_text(const ToyModel& model, const LabeledBatch& forget, std::size_t steps,
                                       std::span<const std::size_t> layers);

struct SensitivityReport {
  std::map<std::size_t, LayerScores> per_param;
  std::map<std::size_t, std::vector<double>> per_neuron;  // column sums of per_param weights
  std::size_t steps = 0;
  ScoreStore fisher_accumulator;
  ScoreStore gradient_accumulator;
  std::map<std::size_t, std::string> layer_names;
};

// Group-wise union of the two branches: vision layers carry Fisher scores,
// projector layers carry IG scores. Throws ConfigError when the branches
// cover a common layer.
SensitivityReport combined_scores(const BranchScores& fisher, const BranchScores& ig, const ToyModel& model);

std::vector<double> column_sums(const Matrix& m);

struct NeuronMask {
  std::map<std::size_t, std::vector<std::size_t>> per_layer;  // ascending column indices
  double ratio = 1.0;
  std::string report_hash;
};

// Number of columns kept for a layer of input width `d_in`:
// max(1, floor(ratio * d_in)).
std::size_t mask_size(double ratio, std::size_t d_in);

// Top-K input columns per layer by per-neuron score; ties go to the lower
// index; output sorted ascending. ratio must lie in (0, 1].
NeuronMask topk_mask(const SensitivityReport& report, double ratio);

// Index set of the `count` highest scores (ties to lower index), ascending.
std::vector<std::size_t> topk_indices(std::span<const double> scores, std::size_t count);

// Delimiter-separated dump: header "layer,row,scores", then one line per
// weight row with the layer name, row index and that row's scores.
std::string export_heatmap(const SensitivityReport& report);

std::string report_hash(const SensitivityReport& report);

nlohmann::json mask_to_json(const NeuronMask& mask, const ToyModel& model);
NeuronMask mask_from_json(const nlohmann::json& j, const ToyModel& model);

}  // namespace xstack
