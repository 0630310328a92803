#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "xstack/model.hpp"
#include "xstack/sensitivity.hpp"

namespace xstack {

enum class Modality { vision, text };

struct MultimodalSample {
  std::vector<double> features;
  std::size_t label = 0;
  std::string identity;
  Modality modality = Modality::vision;
};

using SampleSet = std::vector<MultimodalSample>;

// Gaussian clusters around seeded, identity-specific mean directions.
struct IdentityDatasetConfig {
  std::size_t identities = 2;
  std::size_t samples_per_identity = 40;
  std::size_t width = 16;
  double mean_scale = 1.5;
  double noise = 0.35;
  std::uint64_t seed = 0;
};

// Samples are ordered by identity; identity i is tagged "identity-<i>" and
// labelled i.
SampleSet make_identity_dataset(const IdentityDatasetConfig& config);

// Cluster centres of make_identity_dataset(config), in identity order.
std::vector<std::vector<double>> identity_means(const IdentityDatasetConfig& config);

Matrix features_of(const SampleSet& samples);
// One-hot targets of width `classes`.
Matrix one_hot_targets(const SampleSet& samples, std::size_t classes);
LabeledBatch to_labeled_batch(const SampleSet& samples, std::size_t classes);

// Full-batch gradient descent on the supervised loss over every parameter.
// Returns the final loss.
double pretrain_classifier(ToyModel& model, const SampleSet& samples, std::size_t epochs, double learning_rate);

// Fraction of samples whose argmax head output equals the label.
double accuracy(const ToyModel& model, const SampleSet& samples);

// Bundled toy unlearning task: a pretrained classifier plus forget/retain
// splits (the first `forget_identities` identities form the forget set).
struct ToyTaskConfig {
  IdentityDatasetConfig data;
  ModelShape shape;
  std::size_t forget_identities = 1;
  std::size_t pretrain_epochs = 400;
  double pretrain_learning_rate = 0.2;
};

struct ToyTask {
  ToyModel model;
  SampleSet forget;
  SampleSet retain;
};

ToyTask make_toy_task(const ToyTaskConfig& config);

ToyTaskConfig toy_task_config_from_json(const nlohmann::json& j);
nlohmann::json samples_to_json(const SampleSet& samples);
SampleSet samples_from_json(const nlohmann::json& j);

}  // namespace xstack
