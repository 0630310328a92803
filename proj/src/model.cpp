#include "xstack/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "xstack/error.hpp"
#include "xstack/gradients.hpp"
#include "xstack/loss.hpp"

namespace xstack {

const char* to_string(Activation a) { return a == Activation::tanh ? "tanh" : "identity"; }

const char* to_string(LayerRole r) {
  switch (r) {
    case LayerRole::vision: return "vision";
    case LayerRole::projector: return "projector";
    case LayerRole::head: return "head";
  }
  return "?";
}

std::size_t ToyModel::tap_width() const {
  return feature_tap == 0 ? input_width() : layers[feature_tap - 1].out_width();
}

std::size_t ToyModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weights.data.size() + l.bias.size();
  return n;
}

std::string ToyModel::layer_name(std::size_t layer) const {
  const LayerRole role = roles.at(layer);
  const auto same = std::count(roles.begin(), roles.end(), role);
  const auto ordinal = std::count(roles.begin(), roles.begin() + static_cast<std::ptrdiff_t>(layer), role);
  std::string name = to_string(role);
  if (role == LayerRole::vision || same > 1) name += "." + std::to_string(ordinal);
  return name;
}

std::optional<std::size_t> ToyModel::find_layer(const std::string& name) const {
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layer_name(i) == name) return i;
  return std::nullopt;
}

std::vector<std::size_t> ToyModel::layers_with_role(LayerRole role) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < roles.size(); ++i)
    if (roles[i] == role) out.push_back(i);
  return out;
}

void ToyModel::validate() const {
  if (layers.empty()) throw ConfigError("model has no layers");
  if (roles.size() != layers.size()) throw ConfigError("model role list does not match layer count");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.weights.data.size() != l.weights.rows * l.weights.cols)
      throw ConfigError("layer " + layer_name(i) + ": weight storage size mismatch");
    if (l.bias.size() != l.out_width()) throw ConfigError("layer " + layer_name(i) + ": bias width mismatch");
    if (i > 0 && l.in_width() != layers[i - 1].out_width())
      throw ConfigError("layer " + layer_name(i) + ": input width does not match previous layer");
  }
  if (feature_tap == 0 || feature_tap > layers.size())
    throw ConfigError("feature tap " + std::to_string(feature_tap) + " is not a layer output boundary");
}

ToyModel make_toy_model(const ModelShape& shape, std::uint64_t seed) {
  ToyModel m;
  m.seed = seed;
  std::mt19937_64 rng(seed);
  auto add = [&](std::size_t in, std::size_t out, Activation act, LayerRole role) {
    if (in == 0 || out == 0) throw ConfigError("layer widths must be positive");
    DenseLayer l{Matrix(out, in), std::vector<double>(out, 0.0), act};
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (double& w : l.weights.data) w = u(rng);
    m.layers.push_back(std::move(l));
    m.roles.push_back(role);
  };
  std::size_t width = shape.input;
  for (std::size_t v : shape.vision) {
    add(width, v, Activation::tanh, LayerRole::vision);
    width = v;
  }
  add(width, shape.projector, Activation::identity, LayerRole::projector);
  add(shape.projector, shape.classes, Activation::identity, LayerRole::head);
  m.feature_tap = shape.feature_tap.value_or(shape.vision.size());
  m.validate();
  return m;
}

PartialLinearAdapter PartialLinearAdapter::zeros(const ToyModel& model, std::size_t layer,
                                                 std::vector<std::size_t> columns) {
  if (layer >= model.layers.size()) throw InvalidArgument("adapter references a missing layer");
  const auto& l = model.layers[layer];
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] >= l.in_width()) throw InvalidArgument("adapter column index out of range");
    if (i > 0 && columns[i] <= columns[i - 1]) throw InvalidArgument("adapter columns must be strictly increasing");
  }
  PartialLinearAdapter a;
  a.layer = layer;
  a.delta = Matrix(l.out_width(), columns.size());
  a.columns = std::move(columns);
  return a;
}

namespace {

// Per-layer adapter lookup; nullptr where a layer has none.
std::vector<const PartialLinearAdapter*> index_adapters(const ToyModel& model, AdapterSpan adapters) {
  std::vector<const PartialLinearAdapter*> by_layer(model.layers.size(), nullptr);
  for (const auto& a : adapters) {
    if (a.layer >= model.layers.size()) throw InvalidArgument("adapter references a missing layer");
    if (by_layer[a.layer] != nullptr) throw InvalidArgument("two adapters reference layer " + model.layer_name(a.layer));
    const auto& l = model.layers[a.layer];
    if (a.delta.rows != l.out_width() || a.delta.cols != a.columns.size())
      throw InvalidArgument("adapter delta shape does not match layer " + model.layer_name(a.layer));
    for (std::size_t c : a.columns)
      if (c >= l.in_width()) throw InvalidArgument("adapter column index out of range");
    by_layer[a.layer] = &a;
  }
  return by_layer;
}

struct Trace {
  std::vector<Matrix> activations;  // boundary 0..L
};

Trace run_forward(const ToyModel& model, const Matrix& x,
                  const std::vector<const PartialLinearAdapter*>& by_layer) {
  if (x.cols != model.input_width())
    throw InvalidArgument("input width " + std::to_string(x.cols) + " does not match model input " +
                          std::to_string(model.input_width()));
  Trace t;
  t.activations.reserve(model.layers.size() + 1);
  t.activations.push_back(x);
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    const auto& layer = model.layers[li];
    const Matrix& in = t.activations.back();
    Matrix out(in.rows, layer.out_width());
    const PartialLinearAdapter* adapter = by_layer[li];
    for (std::size_t r = 0; r < in.rows; ++r) {
      const auto xr = in.row(r);
      for (std::size_t o = 0; o < layer.out_width(); ++o) {
        double z = 0.0;
        const auto w = layer.weights.row(o);
        for (std::size_t c = 0; c < xr.size(); ++c) z += xr[c] * w[c];
        if (adapter != nullptr) {
          double residual = 0.0;
          for (std::size_t k = 0; k < adapter->columns.size(); ++k)
            residual += xr[adapter->columns[k]] * adapter->delta(o, k);
          z += residual;
        }
        z += layer.bias[o];
        out(r, o) = layer.activation == Activation::tanh ? std::tanh(z) : z;
      }
    }
    if (!out.all_finite()) throw NumericError("non-finite activation in layer " + model.layer_name(li));
    t.activations.push_back(std::move(out));
  }
  return t;
}

// Backpropagates d(loss)/d(activation at `boundary`) down to the input.
void backprop(const ToyModel& model, const std::vector<const PartialLinearAdapter*>& by_layer,
              AdapterSpan adapters, const Trace& trace, std::size_t boundary, Matrix grad,
              GradientScope scope, GradientStore& store) {
  for (std::size_t li = boundary; li-- > 0;) {
    const auto& layer = model.layers[li];
    const Matrix& in = trace.activations[li];
    const Matrix& out = trace.activations[li + 1];
    // dz = grad * act'(z); for tanh, act' = 1 - a^2.
    Matrix dz = grad;
    if (layer.activation == Activation::tanh)
      for (std::size_t i = 0; i < dz.data.size(); ++i) dz.data[i] *= 1.0 - out.data[i] * out.data[i];

    const PartialLinearAdapter* adapter = by_layer[li];
    if (scope == GradientScope::parameters) {
      auto& lg = store.layers[li];
      for (std::size_t r = 0; r < dz.rows; ++r)
        for (std::size_t o = 0; o < dz.cols; ++o) {
          const double g = dz(r, o);
          lg.bias[o] += g;
          for (std::size_t c = 0; c < in.cols; ++c) lg.weights(o, c) += g * in(r, c);
        }
    } else if (adapter != nullptr) {
      const auto ai = static_cast<std::size_t>(adapter - adapters.data());
      auto& ag = store.adapters[ai];
      for (std::size_t r = 0; r < dz.rows; ++r)
        for (std::size_t o = 0; o < dz.cols; ++o)
          for (std::size_t k = 0; k < adapter->columns.size(); ++k)
            ag(o, k) += dz(r, o) * in(r, adapter->columns[k]);
    }
    if (li == 0) break;
    Matrix next(in.rows, in.cols);
    for (std::size_t r = 0; r < dz.rows; ++r)
      for (std::size_t o = 0; o < dz.cols; ++o) {
        const double g = dz(r, o);
        for (std::size_t c = 0; c < in.cols; ++c) next(r, c) += g * layer.weights(o, c);
        if (adapter != nullptr)
          for (std::size_t k = 0; k < adapter->columns.size(); ++k)
            next(r, adapter->columns[k]) += g * adapter->delta(o, k);
      }
    grad = std::move(next);
  }
}

const TeacherSnapshot& require_teacher(const TeacherSnapshot* t) {
  if (t == nullptr) throw ConfigError("feature loss requires a teacher snapshot");
  return *t;
}

}  // namespace

ForwardResult forward(const ToyModel& model, const Matrix& x, AdapterSpan adapters) {
  model.validate();
  const auto by_layer = index_adapters(model, adapters);
  Trace t = run_forward(model, x, by_layer);
  ForwardResult r;
  r.tapped = t.activations[model.feature_tap];
  r.output = std::move(t.activations.back());
  return r;
}

GradientStore param_gradients(const ToyModel& model, AdapterSpan adapters, const Matrix& x,
                              const LossSpec& loss, GradientScope scope) {
  model.validate();
  if (x.rows == 0) throw InvalidArgument("gradient batch is empty");
  const auto by_layer = index_adapters(model, adapters);

  // Resolve the teacher before any work so a missing one fails fast.
  Matrix teacher_features;
  if (const auto* f = std::get_if<ForgetLossSpec>(&loss))
    teacher_features = forward(require_teacher(f->teacher).model(), x).tapped;
  else if (const auto* r = std::get_if<RetainLossSpec>(&loss))
    teacher_features = forward(require_teacher(r->teacher).model(), x).tapped;

  const Trace trace = run_forward(model, x, by_layer);

  LossValue value;
  std::size_t boundary = model.layers.size();
  if (const auto* s = std::get_if<SupervisedLossSpec>(&loss)) {
    value = supervised_loss(trace.activations.back(), s->targets);
  } else if (const auto* f = std::get_if<ForgetLossSpec>(&loss)) {
    boundary = model.feature_tap;
    value = forget_loss(trace.activations[boundary], teacher_features, f->directions, f->huber_delta);
  } else {
    const auto& r = std::get<RetainLossSpec>(loss);
    boundary = model.feature_tap;
    value = retain_loss(trace.activations[boundary], teacher_features, r.huber_delta);
  }
  if (!std::isfinite(value.loss)) throw NumericError("loss is not finite");

  GradientStore store;
  store.loss = value.loss;
  if (scope == GradientScope::parameters) {
    for (const auto& l : model.layers)
      store.layers.push_back({Matrix(l.out_width(), l.in_width()), std::vector<double>(l.out_width(), 0.0)});
  } else {
    for (const auto& a : adapters) store.adapters.emplace_back(a.delta.rows, a.delta.cols);
  }
  backprop(model, by_layer, adapters, trace, boundary, std::move(value.grad), scope, store);
  return store;
}

DenseLayer merge(const PartialLinearAdapter& adapter, const DenseLayer& layer) {
  if (adapter.delta.rows != layer.out_width() || adapter.delta.cols != adapter.columns.size())
    throw InvalidArgument("adapter shape does not match layer");
  DenseLayer merged = layer;
  for (std::size_t k = 0; k < adapter.columns.size(); ++k) {
    const std::size_t c = adapter.columns[k];
    if (c >= layer.in_width()) throw InvalidArgument("adapter column index out of range");
    for (std::size_t o = 0; o < layer.out_width(); ++o) merged.weights(o, c) += adapter.delta(o, k);
  }
  return merged;
}

ToyModel merge_all(const ToyModel& model, AdapterSpan adapters) {
  index_adapters(model, adapters);
  ToyModel merged = model;
  for (const auto& a : adapters) merged.layers[a.layer] = merge(a, model.layers[a.layer]);
  return merged;
}

TeacherSnapshot snapshot_teacher(const ToyModel& model) {
  model.validate();
  return TeacherSnapshot(model);
}

ToyModel scaled(const ToyModel& model, double alpha) {
  ToyModel m = model;
  for (auto& l : m.layers) {
    for (double& w : l.weights.data) w *= alpha;
    for (double& b : l.bias) b *= alpha;
  }
  return m;
}

}  // namespace xstack
