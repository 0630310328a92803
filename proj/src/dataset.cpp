#include "xstack/dataset.hpp"

#include <algorithm>
#include <random>

#include "xstack/error.hpp"
#include "xstack/gradients.hpp"

namespace xstack {

SampleSet make_identity_dataset(const IdentityDatasetConfig& config) {
  if (config.identities == 0 || config.samples_per_identity == 0 || config.width == 0)
    throw InvalidArgument("identity dataset needs identities, samples and width");
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  SampleSet out;
  out.reserve(config.identities * config.samples_per_identity);
  for (std::size_t id = 0; id < config.identities; ++id) {
    std::vector<double> mean(config.width);
    for (double& v : mean) v = normal(rng);
    mean = normalized(mean);
    for (double& v : mean) v *= config.mean_scale;
    for (std::size_t s = 0; s < config.samples_per_identity; ++s) {
      MultimodalSample sample;
      sample.features = mean;
      for (double& v : sample.features) v += config.noise * normal(rng);
      sample.label = id;
      sample.identity = "identity-" + std::to_string(id);
      out.push_back(std::move(sample));
    }
  }
  return out;
}

std::vector<std::vector<double>> identity_means(const IdentityDatasetConfig& config) {
  // replays the generator's draw order, discarding the per-sample noise
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> means;
  for (std::size_t id = 0; id < config.identities; ++id) {
    std::vector<double> mean(config.width);
    for (double& v : mean) v = normal(rng);
    mean = normalized(mean);
    for (double& v : mean) v *= config.mean_scale;
    for (std::size_t k = 0; k < config.samples_per_identity * config.width; ++k) normal(rng);
    means.push_back(std::move(mean));
  }
  return means;
}

Matrix features_of(const SampleSet& samples) {
  if (samples.empty()) return {};
  Matrix m(samples.size(), samples.front().features.size());
  for (std::size_t r = 0; r < samples.size(); ++r) {
    if (samples[r].features.size() != m.cols) throw InvalidArgument("samples have inconsistent widths");
    std::copy(samples[r].features.begin(), samples[r].features.end(), m.row(r).begin());
  }
  return m;
}

Matrix one_hot_targets(const SampleSet& samples, std::size_t classes) {
  Matrix t(samples.size(), classes);
  for (std::size_t r = 0; r < samples.size(); ++r) {
    if (samples[r].label >= classes) throw InvalidArgument("sample label exceeds class count");
    t(r, samples[r].label) = 1.0;
  }
  return t;
}

LabeledBatch to_labeled_batch(const SampleSet& samples, std::size_t classes) {
  return {features_of(samples), one_hot_targets(samples, classes)};
}

double pretrain_classifier(ToyModel& model, const SampleSet& samples, std::size_t epochs, double learning_rate) {
  const auto batch = to_labeled_batch(samples, model.output_width());
  const SupervisedLossSpec loss{batch.targets};
  double last = 0.0;
  for (std::size_t e = 0; e < epochs; ++e) {
    const auto g = param_gradients(model, {}, batch.inputs, loss, GradientScope::parameters);
    last = g.loss;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
      auto& layer = model.layers[l];
      for (std::size_t i = 0; i < layer.weights.data.size(); ++i)
        layer.weights.data[i] -= learning_rate * g.layers[l].weights.data[i];
      for (std::size_t i = 0; i < layer.bias.size(); ++i) layer.bias[i] -= learning_rate * g.layers[l].bias[i];
    }
  }
  return last;
}

double accuracy(const ToyModel& model, const SampleSet& samples) {
  if (samples.empty()) return 0.0;
  const auto out = forward(model, features_of(samples)).output;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < out.rows; ++r) {
    const auto row = out.row(r);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == samples[r].label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

ToyTask make_toy_task(const ToyTaskConfig& config) {
  if (config.forget_identities == 0 || config.forget_identities >= config.data.identities)
    throw ConfigError("toy task needs at least one forget and one retain identity");
  ModelShape shape = config.shape;
  shape.input = config.data.width;
  shape.classes = config.data.identities;
  ToyTask task;
  task.model = make_toy_model(shape, config.data.seed);
  const auto samples = make_identity_dataset(config.data);
  pretrain_classifier(task.model, samples, config.pretrain_epochs, config.pretrain_learning_rate);
  for (const auto& s : samples) (s.label < config.forget_identities ? task.forget : task.retain).push_back(s);
  return task;
}

ToyTaskConfig toy_task_config_from_json(const nlohmann::json& j) {
  ToyTaskConfig c;
  if (j.contains("data")) {
    const auto& d = j["data"];
    c.data.identities = d.value("identities", c.data.identities);
    c.data.samples_per_identity = d.value("samples_per_identity", c.data.samples_per_identity);
    c.data.width = d.value("width", c.data.width);
    c.data.mean_scale = d.value("mean_scale", c.data.mean_scale);
    c.data.noise = d.value("noise", c.data.noise);
    c.data.seed = d.value("seed", c.data.seed);
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    c.shape.vision = m.value("vision", c.shape.vision);
    c.shape.projector = m.value("projector", c.shape.projector);
    if (m.contains("feature_tap")) c.shape.feature_tap = m["feature_tap"].get<std::size_t>();
  }
  c.forget_identities = j.value("forget_identities", c.forget_identities);
  c.pretrain_epochs = j.value("pretrain_epochs", c.pretrain_epochs);
  c.pretrain_learning_rate = j.value("pretrain_learning_rate", c.pretrain_learning_rate);
  return c;
}

nlohmann::json samples_to_json(const SampleSet& samples) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& s : samples)
    out.push_back({{"features", s.features},
                   {"label", s.label},
                   {"identity", s.identity},
                   {"modality", s.modality == Modality::vision ? "vision" : "text"}});
  return out;
}

SampleSet samples_from_json(const nlohmann::json& j) {
  SampleSet out;
  for (const auto& sj : j) {
    MultimodalSample s;
    s.features = sj.at("features").get<std::vector<double>>();
    s.label = sj.at("label").get<std::size_t>();
    s.identity = sj.at("identity").get<std::string>();
    s.modality = sj.value("modality", "vision") == "text" ? Modality::text : Modality::vision;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace xstack
