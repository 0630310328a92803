#pragma once

#include <variant>
#include <vector>

#include "xstack/matrix.hpp"
#include "xstack/model.hpp"

namespace xstack {

// Supervised head loss against explicit per-sample targets.
struct SupervisedLossSpec {
  Matrix targets;
};

// Forget objective on the tapped features; `directions` holds one N(0, I)
// draw per sample.
struct ForgetLossSpec {
  const TeacherSnapshot* teacher = nullptr;
  Matrix directions;
  double huber_delta = 1.0;
};

// Retain (distillation) objective on the tapped features.
struct RetainLossSpec {
  const TeacherSnapshot* teacher = nullptr;
  double huber_delta = 1.0;
};

using LossSpec = std::variant<SupervisedLossSpec, ForgetLossSpec, RetainLossSpec>;

enum class GradientScope {
  parameters,  // every weight and bias of the model
  adapters,    // only adapter deltas
};

struct LayerGradient {
  Matrix weights;
  std::vector<double> bias;
};

struct GradientStore {
  double loss = 0.0;
  std::vector<LayerGradient> layers;  // indexed like model.layers; empty for adapter scope
  std::vector<Matrix> adapters;       // indexed like the adapter span; empty for parameter scope
};

// Exact reverse-mode gradients of the selected loss over batch `x`.
// Throws ConfigError when a feature loss has no teacher.
GradientStore param_gradients(const ToyModel& model, AdapterSpan adapters, const Matrix& x,
                              const LossSpec& loss, GradientScope scope);

}  // namespace xstack
