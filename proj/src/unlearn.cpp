#include "xstack/unlearn.hpp"

#include <cmath>
#include <cstdio>
#include <algorithm>
#include <limits>
#include <set>

#include "xstack/error.hpp"
#include "xstack/gradients.hpp"
#include "xstack/hash.hpp"

namespace xstack {

void UnlearnConfig::validate() const {
  if (steps == 0) throw ConfigError("integration steps must be at least 1");
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("top-K ratio must lie in (0, 1]");
  if (!(beta >= 0.0)) throw ConfigError("beta must be non-negative");
  if (!(eta >= 0.0)) throw ConfigError("eta must be non-negative");
  if (!(huber_delta > 0.0)) throw ConfigError("huber delta must be positive");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (early_stop_patience == 0) throw ConfigError("early-stop patience must be positive");
}

UnlearnConfig unlearn_config_from_json(const nlohmann::json& j) {
  UnlearnConfig c;
  c.steps = j.value("steps", c.steps);
  c.ratio = j.value("ratio", c.ratio);
  c.beta = j.value("beta", c.beta);
  c.eta = j.value("eta", c.eta);
  c.huber_delta = j.value("huber_delta", c.huber_delta);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  if (j.contains("feature_tap") && !j["feature_tap"].is_null()) c.feature_tap = j["feature_tap"].get<std::size_t>();
  c.fixed_direction = j.value("fixed_direction", c.fixed_direction);
  c.early_stop_tolerance = j.value("early_stop_tolerance", c.early_stop_tolerance);
  c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
  c.validate();
  return c;
}

nlohmann::json unlearn_config_to_json(const UnlearnConfig& c) {
  nlohmann::json j{{"steps", c.steps},
                   {"ratio", c.ratio},
                   {"beta", c.beta},
                   {"eta", c.eta},
                   {"huber_delta", c.huber_delta},
                   {"epochs", c.epochs},
                   {"batch_size", c.batch_size},
                   {"seed", c.seed},
                   {"fixed_direction", c.fixed_direction},
                   {"early_stop_tolerance", c.early_stop_tolerance},
                   {"early_stop_patience", c.early_stop_patience}};
  j["feature_tap"] = c.feature_tap ? nlohmann::json(*c.feature_tap) : nlohmann::json(nullptr);
  return j;
}

AdaptedModel::AdaptedModel(ToyModel backbone, const NeuronMask& mask)
    : backbone_(std::move(backbone)), teacher_(snapshot_teacher(backbone_)) {
  attach(mask);
}

void AdaptedModel::attach(const NeuronMask& mask) {
  for (const auto& [layer, columns] : mask.per_layer) {
    if (layer >= backbone_.layers.size()) throw InvalidArgument("mask references a missing layer");
    for (const auto& a : adapters_)
      if (a.layer == layer) throw StateError("layer " + backbone_.layer_name(layer) + " already has an adapter");
  }
  for (const auto& [layer, columns] : mask.per_layer)
    adapters_.push_back(PartialLinearAdapter::zeros(backbone_, layer, columns));
}

ToyModel AdaptedModel::finalize() {
  if (!adapters_.empty()) {
    backbone_ = merge_all(backbone_, adapters_);
    adapters_.clear();
  }
  return backbone_;
}

AdaptedModel AdaptedModel::from_parts(ToyModel backbone, std::vector<PartialLinearAdapter> adapters) {
  TeacherSnapshot teacher = snapshot_teacher(backbone);
  AdaptedModel m(std::move(backbone), std::move(teacher));
  xstack::forward(m.backbone_, Matrix(1, m.backbone_.input_width()), adapters);  // validates adapters
  m.adapters_ = std::move(adapters);
  return m;
}

AdaptedModel attach_adapters(const ToyModel& model, const NeuronMask& mask) { return AdaptedModel(model, mask); }

ToyModel finalize(AdaptedModel& adapted) { return adapted.finalize(); }

const char* to_string(TrainingStatus s) {
  switch (s) {
    case TrainingStatus::completed: return "completed";
    case TrainingStatus::early_stopped: return "early_stopped";
    case TrainingStatus::aborted: return "aborted";
  }
  return "?";
}

Matrix draw_directions(std::mt19937_64& rng, std::size_t rows, std::size_t width) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, width);
  for (double& v : m.data) v = normal(rng);
  return m;
}

TrainingStep frmu_step(AdaptedModel& adapted, const Matrix& forget_x, const Matrix& retain_x,
                       const Matrix& directions, const UnlearnConfig& config) {
  const ForgetLossSpec forget_spec{&adapted.teacher(), directions, config.huber_delta};
  const RetainLossSpec retain_spec{&adapted.teacher(), config.huber_delta};
  const auto gf = param_gradients(adapted.backbone(), adapted.adapters(), forget_x, forget_spec, GradientScope::adapters);
  const auto gr = param_gradients(adapted.backbone(), adapted.adapters(), retain_x, retain_spec, GradientScope::adapters);

  TrainingStep step;
  step.forget = gf.loss;
  step.retain = gr.loss;
  step.total = gf.loss + config.beta * gr.loss;
  if (!std::isfinite(step.total)) throw NumericError("non-finite training loss");

  auto& adapters = adapted.adapters();
  for (std::size_t a = 0; a < adapters.size(); ++a) {
    auto& delta = adapters[a].delta.data;
    for (std::size_t i = 0; i < delta.size(); ++i) {
      delta[i] -= config.eta * (gf.adapters[a].data[i] + config.beta * gr.adapters[a].data[i]);
      if (!std::isfinite(delta[i])) throw NumericError("non-finite adapter update");
    }
  }
  return step;
}

namespace {

Matrix cyclic_batch(const Matrix& all, std::size_t batch, std::size_t batch_size) {
  const std::size_t n = std::min(batch_size, all.rows);
  Matrix out(n, all.cols);
  for (std::size_t i = 0; i < n; ++i) {
    const auto src = all.row((batch * batch_size + i) % all.rows);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace

TrainingLog train_frmu(AdaptedModel& adapted, const SampleSet& forget, const SampleSet& retain,
                       const UnlearnConfig& config) {
  config.validate();
  if (forget.empty() || retain.empty()) throw InvalidArgument("forget and retain sets must be non-empty");
  std::set<std::string> forget_ids;
  for (const auto& s : forget) forget_ids.insert(s.identity);
  for (const auto& s : retain)
    if (forget_ids.count(s.identity) != 0)
      throw InvalidArgument("identity '" + s.identity + "' appears in both forget and retain sets");
  if (config.feature_tap && *config.feature_tap != adapted.backbone().feature_tap)
    throw ConfigError("feature tap in config does not match the adapted model");

  const Matrix fx = features_of(forget);
  const Matrix rx = features_of(retain);
  const std::size_t bs = config.batch_size;
  const std::size_t batches = std::max((fx.rows + bs - 1) / bs, (rx.rows + bs - 1) / bs);
  const std::size_t tap_width = adapted.backbone().tap_width();

  std::mt19937_64 rng(config.seed);
  Matrix fixed;
  if (config.fixed_direction) fixed = draw_directions(rng, 1, tap_width);

  TrainingLog log;
  // Early stopping watches the per-epoch mean total loss: per-step values
  // carry the noise of the fresh random directions.
  double best = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double epoch_total = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const Matrix xf = cyclic_batch(fx, b, bs);
      const Matrix xr = cyclic_batch(rx, b, bs);
      Matrix directions;
      if (config.fixed_direction) {
        directions = Matrix(xf.rows, tap_width);
        for (std::size_t r = 0; r < xf.rows; ++r) std::copy(fixed.data.begin(), fixed.data.end(), directions.row(r).begin());
      } else {
        directions = draw_directions(rng, xf.rows, tap_width);
      }

      const auto last_good = adapted.adapters();
      TrainingStep step;
      try {
        step = frmu_step(adapted, xf, xr, directions, config);
      } catch (const NumericError& e) {
        adapted.adapters() = last_good;
        log.status = TrainingStatus::aborted;
        log.diagnostic = std::string(e.what()) + " at step " + std::to_string(log.steps.size());
        return log;
      }
      step.step = log.steps.size();
      step.epoch = epoch;
      log.steps.push_back(step);
      epoch_total += step.total;
    }
    epoch_total /= static_cast<double>(batches);
    if (epoch_total < best - config.early_stop_tolerance) {
      best = epoch_total;
      stale = 0;
    } else if (++stale >= config.early_stop_patience) {
      log.status = TrainingStatus::early_stopped;
      break;
    }
  }
  return log;
}

std::string training_log_csv(const TrainingLog& log) {
  std::string out = "step,forget,retain,total\n";
  char buf[128];
  for (const auto& s : log.steps) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", s.step, s.forget, s.retain, s.total);
    out += buf;
  }
  return out;
}

std::string parameter_hash(const ToyModel& model) {
  std::vector<double> all;
  for (const auto& l : model.layers) {
    all.insert(all.end(), l.weights.data.begin(), l.weights.data.end());
    all.insert(all.end(), l.bias.begin(), l.bias.end());
  }
  return sha256_hex(all);
}

double mean_row_cosine(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw InvalidArgument("mean_row_cosine: shape mismatch");
  if (a.rows == 0) return 0.0;
  double s = 0.0;
  for (std::size_t r = 0; r < a.rows; ++r) s += cosine(a.row(r), b.row(r));
  return s / static_cast<double>(a.rows);
}

UnlearnMetrics evaluate_unlearning(const ToyModel& before, const ToyModel& after, const SampleSet& forget,
                                   const SampleSet& retain) {
  UnlearnMetrics m;
  std::size_t sample_id = 0;
  auto split = [&](const SampleSet& set, const char* name, double& cos, double& acc_before, double& acc_after) {
    if (set.empty()) return;
    const Matrix x = features_of(set);
    const Matrix fb = forward(before, x).tapped;
    const Matrix fa = forward(after, x).tapped;
    cos = mean_row_cosine(fb, fa);
    acc_before = accuracy(before, set);
    acc_after = accuracy(after, set);
    for (std::size_t r = 0; r < set.size(); ++r, ++sample_id) {
      const auto b = fb.row(r);
      const auto a = fa.row(r);
      m.dump.push_back({sample_id, set[r].identity, name, "before", {b.begin(), b.end()}});
      m.dump.push_back({sample_id, set[r].identity, name, "after", {a.begin(), a.end()}});
    }
  };
  split(forget, "forget", m.forget_cosine, m.forget_accuracy_before, m.forget_accuracy_after);
  split(retain, "retain", m.retain_cosine, m.retain_accuracy_before, m.retain_accuracy_after);
  return m;
}

nlohmann::json metrics_to_json(const UnlearnMetrics& m) {
  return {{"forget_cosine", m.forget_cosine},
          {"retain_cosine", m.retain_cosine},
          {"forget_accuracy_before", m.forget_accuracy_before},
          {"forget_accuracy_after", m.forget_accuracy_after},
          {"retain_accuracy_before", m.retain_accuracy_before},
          {"retain_accuracy_after", m.retain_accuracy_after}};
}

std::string feature_dump_csv(const UnlearnMetrics& m) {
  std::string out = "sample,identity,split,stage,features\n";
  char buf[40];
  for (const auto& row : m.dump) {
    out += std::to_string(row.sample) + "," + row.identity + "," + row.split + "," + row.stage;
    for (double v : row.features) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

NeuronMask score_and_mask(const ToyModel& model, const SampleSet& forget, const UnlearnConfig& config,
                          SensitivityReport* report_out) {
  const auto batch = to_labeled_batch(forget, model.output_width());
  const auto fisher = integrated_fisher(model, batch, config.steps);
  const auto ig = integrated_gradients_text(model, batch, config.steps);
  auto report = combined_scores(fisher, ig, model);
  auto mask = topk_mask(report, config.ratio);
  if (report_out != nullptr) *report_out = std::move(report);
  return mask;
}

}  // namespace xstack
