#pragma once

// Independent reference implementations used by the tests and the
// acceptance binary. Deliberately naive: loops, full sorts, brute counts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "xstack/gradients.hpp"
#include "xstack/matrix.hpp"
#include "xstack/model.hpp"

namespace oracle {

using xstack::Matrix;

inline Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (auto& v : m.data) v = n(rng);
  return m;
}

// Toy model with random (non-zero) biases so every parameter matters.
inline xstack::ToyModel random_model(std::uint64_t seed, const xstack::ModelShape& shape = {4, {3, 3}, 3, 2, {}}) {
  auto m = xstack::make_toy_model(shape, seed);
  std::mt19937_64 rng(seed ^ 0xabcdefULL);
  std::normal_distribution<double> n(0.0, 0.3);
  for (auto& l : m.layers)
    for (auto& b : l.bias) b = n(rng);
  return m;
}

// y = act(x W^T + x_S delta^T + b), layer by layer, with plain loops.
struct Forward {
  Matrix output;
  Matrix tapped;
};

inline Forward naive_forward(const xstack::ToyModel& model, const Matrix& x,
                             const std::vector<xstack::PartialLinearAdapter>& adapters = {}) {
  Forward f;
  Matrix cur = x;
  if (model.feature_tap == 0) f.tapped = cur;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& L = model.layers[l];
    Matrix next(cur.rows, L.weights.rows);
    for (std::size_t s = 0; s < cur.rows; ++s) {
      for (std::size_t j = 0; j < L.weights.rows; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < L.weights.cols; ++i) acc += cur(s, i) * L.weights(j, i);
        for (const auto& a : adapters) {
          if (a.layer != l) continue;
          for (std::size_t k = 0; k < a.columns.size(); ++k) acc += cur(s, a.columns[k]) * a.delta(j, k);
        }
        acc += L.bias[j];
        next(s, j) = L.activation == xstack::Activation::tanh ? std::tanh(acc) : acc;
      }
    }
    cur = next;
    if (model.feature_tap == l + 1) f.tapped = cur;
  }
  f.output = cur;
  return f;
}

// Central finite differences, worst relative error over all probed scalars.
struct FdResult {
  double worst_rel = 0.0;
  std::size_t checked = 0;
};

inline double rel_error(double analytic, double numeric, double floor = 1e-8) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Parameter-scope check: perturbs each weight and bias of `model`.
inline FdResult check_parameter_gradients(xstack::ToyModel& model, const Matrix& x, const xstack::LossSpec& spec,
                                          double h = 1e-5) {
  const auto g = xstack::param_gradients(model, {}, x, spec, xstack::GradientScope::parameters);
  FdResult r;
  auto probe = [&](double& slot, double analytic) {
    const double keep = slot;
    slot = keep + h;
    const double up = xstack::param_gradients(model, {}, x, spec, xstack::GradientScope::parameters).loss;
    slot = keep - h;
    const double down = xstack::param_gradients(model, {}, x, spec, xstack::GradientScope::parameters).loss;
    slot = keep;
    r.worst_rel = std::max(r.worst_rel, rel_error(analytic, (up - down) / (2 * h)));
    ++r.checked;
  };
  auto& m = model;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    for (std::size_t i = 0; i < m.layers[l].weights.data.size(); ++i)
      probe(m.layers[l].weights.data[i], g.layers[l].weights.data[i]);
    for (std::size_t i = 0; i < m.layers[l].bias.size(); ++i) probe(m.layers[l].bias[i], g.layers[l].bias[i]);
  }
  return r;
}

// Adapter-scope check: perturbs each adapter delta entry.
inline FdResult check_adapter_gradients(const xstack::ToyModel& model, std::vector<xstack::PartialLinearAdapter>& adapters,
                                        const Matrix& x, const xstack::LossSpec& spec, double h = 1e-5) {
  const auto g = xstack::param_gradients(model, adapters, x, spec, xstack::GradientScope::adapters);
  FdResult r;
  for (std::size_t a = 0; a < adapters.size(); ++a) {
    for (std::size_t i = 0; i < adapters[a].delta.data.size(); ++i) {
      double& slot = adapters[a].delta.data[i];
      const double keep = slot;
      slot = keep + h;
      const double up = xstack::param_gradients(model, adapters, x, spec, xstack::GradientScope::adapters).loss;
      slot = keep - h;
      const double down = xstack::param_gradients(model, adapters, x, spec, xstack::GradientScope::adapters).loss;
      slot = keep;
      r.worst_rel = std::max(r.worst_rel, rel_error(g.adapters[a].data[i], (up - down) / (2 * h)));
      ++r.checked;
    }
  }
  return r;
}

// Index set of the `count` largest scores via a full stable sort.
inline std::vector<std::size_t> topk_by_sort(const std::vector<double>& scores, std::size_t count) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Brute-force FAR/FRR at one threshold.
inline double count_far(const std::vector<double>& impostor, double tau) {
  std::size_t n = 0;
  for (double s : impostor)
    if (s >= tau) ++n;
  return impostor.empty() ? 0.0 : static_cast<double>(n) / impostor.size();
}

inline double count_frr(const std::vector<double>& genuine, double tau) {
  std::size_t n = 0;
  for (double s : genuine)
    if (s < tau) ++n;
  return genuine.empty() ? 0.0 : static_cast<double>(n) / genuine.size();
}

// Nearest-rank percentile by hand: sort, take rank ceil(q n).
inline double p_nearest_rank(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  std::size_t rank = static_cast<std::size_t>(std::ceil(q * v.size() - 1e-12));
  if (rank < 1) rank = 1;
  return v[rank - 1];
}

// Likert mean and population sigma from counts for scores 5..1.
inline std::pair<double, double> likert_moments(const std::vector<std::size_t>& counts) {
  double n = 0, s = 0, s2 = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double score = 5.0 - static_cast<double>(i);
    n += counts[i];
    s += counts[i] * score;
    s2 += counts[i] * score * score;
  }
  const double mean = s / n;
  return {mean, std::sqrt(std::max(0.0, s2 / n - mean * mean))};
}

}  // namespace oracle
