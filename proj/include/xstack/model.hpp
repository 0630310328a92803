#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xstack/matrix.hpp"

namespace xstack {

enum class Activation { identity, tanh };
enum class LayerRole { vision, projector, head };

const char* to_string(Activation a);
const char* to_string(LayerRole r);

struct DenseLayer {
  Matrix weights;            // d_out x d_in
  std::vector<double> bias;  // d_out
  Activation activation = Activation::identity;

  std::size_t in_width() const { return weights.cols; }
  std::size_t out_width() const { return weights.rows; }

  bool operator==(const DenseLayer&) const = default;
};

// Small dense network standing in for a multimodal model: a tanh vision
// tower, an identity projector and an identity classification head, stored
// as one ordered layer list with a role per layer.
//
// `feature_tap` names a layer boundary: 0 is the raw input and boundary i is
// the output of layer i - 1. The tapped activation is the representation the
// unlearning objectives act on.
struct ToyModel {
  std::vector<DenseLayer> layers;
  std::vector<LayerRole> roles;
  std::size_t feature_tap = 0;
  std::uint64_t seed = 0;

  std::size_t input_width() const { return layers.front().in_width(); }
  std::size_t output_width() const { return layers.back().out_width(); }
  std::size_t tap_width() const;
  std::size_t parameter_count() const;
  // "vision.0", "vision.1", "projector", "head" ...
  std::string layer_name(std::size_t layer) const;
  std::optional<std::size_t> find_layer(const std::string& name) const;
  std::vector<std::size_t> layers_with_role(LayerRole role) const;

  // Throws ConfigError if dimensions do not chain or the tap is out of range.
  void validate() const;

  bool operator==(const ToyModel&) const = default;
};

struct ModelShape {
  std::size_t input = 16;
  std::vector<std::size_t> vision = {12, 8};
  std::size_t projector = 8;
  std::size_t classes = 2;
  // Defaults to the vision-tower output (projector input).
  std::optional<std::size_t> feature_tap;
};

// Seeded Glorot-uniform initialisation, zero biases.
ToyModel make_toy_model(const ModelShape& shape, std::uint64_t seed);

// Frozen layer plus a trainable residual on a subset of its input columns:
//   y = x W^T + P_S(x) delta^T + b
// where P_S slices the columns listed in `columns`.
struct PartialLinearAdapter {
  std::size_t layer = 0;
  std::vector<std::size_t> columns;  // strictly increasing
  Matrix delta;                      // d_out x |columns|

  // Zero-initialised adapter for `layer` of `model`. Throws InvalidArgument
  // on unsorted, duplicate or out-of-range columns.
  static PartialLinearAdapter zeros(const ToyModel& model, std::size_t layer,
                                    std::vector<std::size_t> columns);

  bool operator==(const PartialLinearAdapter&) const = default;
};

using AdapterSpan = std::span<const PartialLinearAdapter>;

struct ForwardResult {
  Matrix output;
  Matrix tapped;
};

// Batched forward pass, one sample per row of `x`.
ForwardResult forward(const ToyModel& model, const Matrix& x, AdapterSpan adapters = {});

// Column-merges the adapter into a copy of `layer`.
DenseLayer merge(const PartialLinearAdapter& adapter, const DenseLayer& layer);
// Merges every adapter into a copy of `model`.
ToyModel merge_all(const ToyModel& model, AdapterSpan adapters);

// Copy of a model taken at freeze time. Never mutated afterwards.
class TeacherSnapshot {
 public:
  explicit TeacherSnapshot(ToyModel model) : model_(std::move(model)) {}
  const ToyModel& model() const { return model_; }
  ToyModel restore() const { return model_; }

 private:
  ToyModel model_;
};

TeacherSnapshot snapshot_teacher(const ToyModel& model);

// Multiplies every weight and bias by `alpha` (the interpolation path used by
// sensitivity analysis).
ToyModel scaled(const ToyModel& model, double alpha);

}  // namespace xstack
