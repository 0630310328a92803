#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "xstack/dataset.hpp"
#include "xstack/error.hpp"
#include "xstack/loss.hpp"
#include "xstack/unlearn.hpp"

using namespace xstack;

namespace {

ToyTask small_task(std::uint64_t seed) {
  ToyTaskConfig c;
  c.data.seed = seed;
  c.data.samples_per_identity = 16;
  c.pretrain_epochs = 200;
  return make_toy_task(c);
}

UnlearnConfig quick(std::uint64_t seed, std::size_t epochs = 5) {
  UnlearnConfig c;
  c.seed = seed;
  c.epochs = epochs;
  c.steps = 4;
  return c;
}

}  // namespace

TEST_CASE("retain loss: closed forms") {
  CHECK(retain_loss(Matrix::from_rows({{1.0}}), Matrix::from_rows({{0.5}}), 1.0).loss == doctest::Approx(0.125));
  CHECK(retain_loss(Matrix::from_rows({{3.0}}), Matrix::from_rows({{0.0}}), 1.0).loss == doctest::Approx(2.5));
  const auto same = retain_loss(Matrix::from_rows({{1.0, -2.0}}), Matrix::from_rows({{1.0, -2.0}}), 1.0);
  CHECK(same.loss == 0.0);
  for (double g : same.grad.data) CHECK(g == 0.0);
}

TEST_CASE("forget loss: gamma and hand evaluation") {
  const auto t = forget_targets(Matrix::from_rows({{3.0, 4.0}}), Matrix::from_rows({{0.6, -0.8}}));
  CHECK(t(0, 0) == doctest::Approx(3.0));
  CHECK(t(0, 1) == doctest::Approx(-4.0));
  CHECK(forget_targets(Matrix::from_rows({{0.0, 0.0}}), Matrix::from_rows({{1.0, 1.0}})) == Matrix(1, 2));

  std::mt19937_64 rng(2024);
  const auto v = draw_directions(rng, 1, 2);
  // H_stu = 0, H_tea = (1, 0): gamma = 1, residual = -v.
  const auto l = forget_loss(Matrix(1, 2), Matrix::from_rows({{1.0, 0.0}}), v, 1.0);
  double hand = 0.0;
  for (double r : v.data) hand += std::abs(r) <= 1.0 ? 0.5 * r * r : std::abs(r) - 0.5;
  CHECK(l.loss == doctest::Approx(hand / 2.0).epsilon(1e-14));
  // student already on target
  CHECK(forget_loss(forget_targets(Matrix::from_rows({{1.0, 0.0}}), v), Matrix::from_rows({{1.0, 0.0}}), v, 1.0).loss ==
        0.0);
}

TEST_CASE("norm matching: target norm equals teacher norm per unit direction") {
  std::mt19937_64 rng(8);
  const auto teacher = oracle::random_matrix(rng, 50, 8, 2.0);
  const auto dirs = draw_directions(rng, 50, 8);
  const auto t = forget_targets(teacher, dirs);
  for (std::size_t r = 0; r < 50; ++r)
    CHECK(std::abs(l2_norm(t.row(r)) / l2_norm(dirs.row(r)) - l2_norm(teacher.row(r))) <= 1e-12);
}

TEST_CASE("attach: zero-init, shapes, double attach") {
  const auto task = small_task(1);
  NeuronMask mask;
  mask.per_layer[0] = {1, 4, 7};
  AdaptedModel a(task.model, mask);
  REQUIRE(a.adapters().size() == 1);
  CHECK(a.adapters()[0].delta.rows == task.model.layers[0].out_width());
  CHECK(a.adapters()[0].delta.cols == 3);
  const auto x = features_of(task.forget);
  CHECK(a.forward(x).output == forward(a.teacher().model(), x).output);
  CHECK_THROWS_AS(a.attach(mask), StateError);
  CHECK(a.frozen());
}

TEST_CASE("single step: beta = 0 matches the hand gradient") {
  ToyModel m;
  m.layers = {DenseLayer{Matrix::from_rows({{0.7}}), {0.1}, Activation::tanh}};
  m.roles = {LayerRole::vision};
  m.feature_tap = 1;
  NeuronMask mask;
  mask.per_layer[0] = {0};
  AdaptedModel a(m, mask);
  UnlearnConfig c;
  c.beta = 0.0;
  c.eta = 0.5;
  const double x = 1.5, v = 0.4;
  frmu_step(a, Matrix::from_rows({{x}}), Matrix::from_rows({{0.3}}), Matrix::from_rows({{v}}), c);
  const double h = std::tanh(0.7 * x + 0.1);
  const double r = h - std::abs(h) * v;  // |r| < delta: huber gradient is r
  const double grad = r * (1.0 - h * h) * x;
  CHECK(a.adapters()[0].delta(0, 0) == doctest::Approx(-0.5 * grad).epsilon(1e-14));
}

TEST_CASE("eta = 0 leaves the model unchanged") {
  const auto task = small_task(2);
  auto c = quick(2);
  c.eta = 0.0;
  AdaptedModel a(task.model, score_and_mask(task.model, task.forget, c));
  train_frmu(a, task.forget, task.retain, c);
  const auto x = features_of(task.retain);
  CHECK(a.forward(x).output == forward(task.model, x).output);
  CHECK(a.finalize() == task.model);
}

TEST_CASE("training: determinism, loss composition, immutability, sparsity") {
  const auto task = small_task(3);
  auto c = quick(3, 8);
  c.beta = 0.7;
  const auto mask = score_and_mask(task.model, task.forget, c);
  AdaptedModel a(task.model, mask), b(task.model, mask);
  const auto hash = parameter_hash(task.model);
  const auto la = train_frmu(a, task.forget, task.retain, c);
  const auto lb = train_frmu(b, task.forget, task.retain, c);
  CHECK(training_log_csv(la) == training_log_csv(lb));
  CHECK(a.adapters() == b.adapters());
  REQUIRE_FALSE(la.steps.empty());
  for (const auto& s : la.steps) CHECK(std::abs(s.total - (s.forget + c.beta * s.retain)) <= 1e-12);
  CHECK(parameter_hash(a.backbone()) == hash);

  const auto merged = a.finalize();
  for (std::size_t l = 0; l < merged.layers.size(); ++l) {
    const auto it = mask.per_layer.find(l);
    const std::set<std::size_t> cols = it == mask.per_layer.end() ? std::set<std::size_t>{}
                                                                  : std::set<std::size_t>(it->second.begin(), it->second.end());
    CHECK(merged.layers[l].bias == task.model.layers[l].bias);
    for (std::size_t o = 0; o < merged.layers[l].out_width(); ++o)
      for (std::size_t i = 0; i < merged.layers[l].in_width(); ++i)
        if (cols.count(i) == 0) CHECK(merged.layers[l].weights(o, i) == task.model.layers[l].weights(o, i));
  }
  CHECK(a.finalize() == merged);
}

TEST_CASE("training: rejects overlapping identities and tap mismatch") {
  const auto task = small_task(4);
  auto c = quick(4, 1);
  AdaptedModel a(task.model, score_and_mask(task.model, task.forget, c));
  CHECK_THROWS_AS(train_frmu(a, task.forget, task.forget, c), InvalidArgument);
  c.feature_tap = task.model.feature_tap + 1;
  CHECK_THROWS_AS(train_frmu(a, task.forget, task.retain, c), ConfigError);
}

TEST_CASE("training: non-finite loss aborts and restores deltas") {
  const auto task = small_task(5);
  auto c = quick(5, 3);
  c.eta = std::numeric_limits<double>::infinity();
  AdaptedModel a(task.model, score_and_mask(task.model, task.forget, c));
  const auto log = train_frmu(a, task.forget, task.retain, c);
  CHECK(log.status == TrainingStatus::aborted);
  CHECK_FALSE(log.diagnostic.empty());
  for (const auto& ad : a.adapters()) CHECK(ad.delta.all_finite());
}

TEST_CASE("finalize: immediately after attach is bit-identical, merge is lossless") {
  const auto task = small_task(6);
  const auto c = quick(6, 4);
  const auto mask = score_and_mask(task.model, task.forget, c);
  AdaptedModel fresh(task.model, mask);
  CHECK(fresh.finalize() == task.model);

  AdaptedModel a(task.model, mask);
  train_frmu(a, task.forget, task.retain, c);
  std::mt19937_64 rng(6);
  const auto x = oracle::random_matrix(rng, 100, task.model.input_width());
  const auto adapted = a.forward(x).output;
  const auto merged = a.finalize();
  CHECK(max_abs_diff(forward(merged, x).output, adapted) <= 1e-10);
}

TEST_CASE("evaluation: identity comparison and rotation oracle") {
  const auto task = small_task(7);
  const auto same = evaluate_unlearning(task.model, task.model, task.forget, task.retain);
  CHECK(same.forget_cosine == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(same.retain_cosine == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(same.forget_accuracy_before == same.forget_accuracy_after);
  CHECK(same.retain_accuracy_before == same.retain_accuracy_after);
  CHECK(feature_dump_csv(same) == feature_dump_csv(evaluate_unlearning(task.model, task.model, task.forget, task.retain)));

  // rotate D_f features by 90 degrees in coordinate pairs; leave D_r alone
  const auto ff = forward(task.model, features_of(task.forget)).tapped;
  const auto fr = forward(task.model, features_of(task.retain)).tapped;
  REQUIRE(ff.cols % 2 == 0);
  Matrix rot = ff;
  for (std::size_t r = 0; r < ff.rows; ++r)
    for (std::size_t c = 0; c < ff.cols; c += 2) {
      rot(r, c) = -ff(r, c + 1);
      rot(r, c + 1) = ff(r, c);
    }
  CHECK(std::abs(mean_row_cosine(ff, rot)) <= 1e-12);
  CHECK(mean_row_cosine(fr, fr) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("config: validation and json round trip") {
  UnlearnConfig c;
  c.ratio = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = UnlearnConfig{};
  c.huber_delta = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = UnlearnConfig{};
  c.seed = 99;
  c.feature_tap = 2;
  const auto back = unlearn_config_from_json(unlearn_config_to_json(c));
  CHECK(back.seed == 99);
  CHECK(back.feature_tap == std::optional<std::size_t>(2));
  CHECK(back.epochs == c.epochs);
}

TEST_CASE("separation on the two-identity task (two seeds)") {
  for (std::uint64_t seed : {0u, 1u}) {
    ToyTaskConfig tc;
    tc.data.seed = seed;
    const auto task = make_toy_task(tc);
    UnlearnConfig c;
    c.seed = seed;
    AdaptedModel a(task.model, score_and_mask(task.model, task.forget, c));
    train_frmu(a, task.forget, task.retain, c);
    const auto after = a.finalize();
    const auto m = evaluate_unlearning(task.model, after, task.forget, task.retain);
    CAPTURE(seed);
    CHECK(m.retain_cosine > 0.9);
    CHECK(m.retain_accuracy_after >= 0.95 * m.retain_accuracy_before);
  }
}
