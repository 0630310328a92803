#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "xstack/dataset.hpp"
#include "xstack/loss.hpp"
#include "xstack/model.hpp"
#include "xstack/sensitivity.hpp"

namespace xstack {

struct UnlearnConfig {
  std::size_t steps = 16;     // integration steps for sensitivity scoring
  double ratio = 0.5;         // top-K column ratio per layer
  double beta = 1.0;          // retain weight
  double eta = 1.0;           // gradient-descent step size
  double huber_delta = 1.0;
  std::size_t epochs = 150;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  std::optional<std::size_t> feature_tap;  // overrides the model's tap when set
  // false: fresh N(0, I) direction per forget sample per step.
  // true: one direction drawn per run and reused.
  bool fixed_direction = false;
  double early_stop_tolerance = 1e-6;  // on the per-epoch mean total loss
  std::size_t early_stop_patience = 10;

  void validate() const;
};

UnlearnConfig unlearn_config_from_json(const nlohmann::json& j);
nlohmann::json unlearn_config_to_json(const UnlearnConfig& c);

// Frozen backbone + zero-initialised column adapters + teacher snapshot.
class AdaptedModel {
 public:
  AdaptedModel(ToyModel backbone, const NeuronMask& mask);

  const ToyModel& backbone() const { return backbone_; }
  const TeacherSnapshot& teacher() const { return teacher_; }
  const std::vector<PartialLinearAdapter>& adapters() const { return adapters_; }
  std::vector<PartialLinearAdapter>& adapters() { return adapters_; }
  bool frozen() const { return frozen_; }

  // Adds adapters for the mask's layers. Throws StateError when a layer
  // already carries an adapter.
  void attach(const NeuronMask& mask);

  ForwardResult forward(const Matrix& x) const { return xstack::forward(backbone_, x, adapters_); }

  // Merges the adapters into the backbone and discards them. Calling it again
  // returns the same model.
  ToyModel finalize();

  // Rebuilds from a backbone plus previously trained adapters (checkpoint load).
  static AdaptedModel from_parts(ToyModel backbone, std::vector<PartialLinearAdapter> adapters);

 private:
  AdaptedModel(ToyModel backbone, TeacherSnapshot teacher) : backbone_(std::move(backbone)), teacher_(std::move(teacher)) {}

  ToyModel backbone_;
  TeacherSnapshot teacher_;
  std::vector<PartialLinearAdapter> adapters_;
  bool frozen_ = true;
};

AdaptedModel attach_adapters(const ToyModel& model, const NeuronMask& mask);
ToyModel finalize(AdaptedModel& adapted);

struct TrainingStep {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double forget = 0.0;
  double retain = 0.0;
  double total = 0.0;
};

enum class TrainingStatus { completed, early_stopped, aborted };

struct TrainingLog {
  std::vector<TrainingStep> steps;
  TrainingStatus status = TrainingStatus::completed;
  std::string diagnostic;
};

const char* to_string(TrainingStatus s);

// N(0, I) draws, one row per sample.
Matrix draw_directions(std::mt19937_64& rng, std::size_t rows, std::size_t width);

// One update of the adapter deltas with explicit forget directions:
//   delta <- delta - eta * grad(L_forget + beta * L_retain)
TrainingStep frmu_step(AdaptedModel& adapted, const Matrix& forget_x, const Matrix& retain_x,
                       const Matrix& directions, const UnlearnConfig& config);

// Runs the representation-misalignment loop over paired (forget, retain)
// batches. Only adapter deltas change. Throws InvalidArgument when the two
// sets share an identity. A non-finite loss restores the last good deltas
// and returns an aborted log.
TrainingLog train_frmu(AdaptedModel& adapted, const SampleSet& forget, const SampleSet& retain,
                       const UnlearnConfig& config);

std::string training_log_csv(const TrainingLog& log);

// SHA-256 over every weight and bias of the model.
std::string parameter_hash(const ToyModel& model);

// Mean over rows of cos(a_i, b_i).
double mean_row_cosine(const Matrix& a, const Matrix& b);

struct FeatureDumpRow {
  std::size_t sample = 0;
  std::string identity;
  std::string split;  // forget | retain
  std::string stage;  // before | after
  std::vector<double> features;
};

struct UnlearnMetrics {
  double forget_cosine = 0.0;
  double retain_cosine = 0.0;
  double forget_accuracy_before = 0.0;
  double forget_accuracy_after = 0.0;
  double retain_accuracy_before = 0.0;
  double retain_accuracy_after = 0.0;
  std::vector<FeatureDumpRow> dump;
};

UnlearnMetrics evaluate_unlearning(const ToyModel& before, const ToyModel& after, const SampleSet& forget,
                                   const SampleSet& retain);

nlohmann::json metrics_to_json(const UnlearnMetrics& m);
// sample,identity,split,stage,f0,f1,...
std::string feature_dump_csv(const UnlearnMetrics& m);

// Phase 1 convenience: IFI on vision layers, IG on projector layers, union,
// then top-K.
NeuronMask score_and_mask(const ToyModel& model, const SampleSet& forget, const UnlearnConfig& config,
                          SensitivityReport* report_out = nullptr);

}  // namespace xstack
