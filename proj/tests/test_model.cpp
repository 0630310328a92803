#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "xstack/checkpoint.hpp"
#include "xstack/error.hpp"
#include "xstack/gradients.hpp"
#include "xstack/loss.hpp"
#include "xstack/model.hpp"

using namespace xstack;

namespace {

ToyModel scalar_model(double w, Activation act = Activation::identity) {
  ToyModel m;
  m.layers = {DenseLayer{Matrix::from_rows({{w}}), {0.0}, act}};
  m.roles = {LayerRole::head};
  m.feature_tap = 1;
  return m;
}

PartialLinearAdapter random_adapter(const ToyModel& m, std::size_t layer, std::mt19937_64& rng) {
  std::vector<std::size_t> cols;
  for (std::size_t c = 0; c < m.layers[layer].in_width(); c += 2) cols.push_back(c);
  auto a = PartialLinearAdapter::zeros(m, layer, cols);
  a.delta = oracle::random_matrix(rng, a.delta.rows, a.delta.cols, 0.5);
  return a;
}

}  // namespace

TEST_CASE("forward: scalar substitution") {
  const auto m = scalar_model(2.0);
  const auto r = forward(m, Matrix::from_rows({{3.0}}));
  CHECK(r.output(0, 0) == 6.0);
}

TEST_CASE("forward: matches naive matmul oracle") {
  std::mt19937_64 rng(11);
  const auto m = oracle::random_model(3, {4, {3}, 3, 2, {}});
  const auto x = oracle::random_matrix(rng, 10, 4);
  const auto got = forward(m, x);
  const auto want = oracle::naive_forward(m, x);
  CHECK(max_abs_diff(got.output, want.output) <= 1e-12);
  CHECK(max_abs_diff(got.tapped, want.tapped) <= 1e-12);
}

TEST_CASE("forward: adapters match naive oracle") {
  std::mt19937_64 rng(5);
  const auto m = oracle::random_model(8);
  std::vector<PartialLinearAdapter> adapters{random_adapter(m, 0, rng), random_adapter(m, 2, rng)};
  const auto x = oracle::random_matrix(rng, 7, m.input_width());
  const auto got = forward(m, x, adapters);
  const auto want = oracle::naive_forward(m, x, adapters);
  CHECK(max_abs_diff(got.output, want.output) <= 1e-12);
  CHECK(max_abs_diff(got.tapped, want.tapped) <= 1e-12);
}

TEST_CASE("forward: rejects bad input and duplicate adapters") {
  const auto m = oracle::random_model(1);
  CHECK_THROWS_AS(forward(m, Matrix(2, m.input_width() + 1)), InvalidArgument);
  const auto a = PartialLinearAdapter::zeros(m, 0, {0});
  std::vector<PartialLinearAdapter> two{a, a};
  CHECK_THROWS_AS(forward(m, Matrix(1, m.input_width()), two), InvalidArgument);
}

TEST_CASE("forward: overflow names the layer") {
  const auto m = scalar_model(1e308);
  try {
    forward(m, Matrix::from_rows({{1e10}}));
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("head") != std::string::npos);
  }
}

TEST_CASE("zero-init identity over seeds") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    const auto m = oracle::random_model(seed, ModelShape{});
    std::vector<PartialLinearAdapter> adapters;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      std::vector<std::size_t> cols;
      for (std::size_t c = 0; c < m.layers[l].in_width(); c += 3) cols.push_back(c);
      adapters.push_back(PartialLinearAdapter::zeros(m, l, cols));
    }
    const auto x = oracle::random_matrix(rng, 100, m.input_width());
    const auto a = forward(m, x);
    const auto b = forward(m, x, adapters);
    CHECK(max_abs_diff(a.output, b.output) == 0.0);
    CHECK(max_abs_diff(a.tapped, b.tapped) == 0.0);
  }
}

TEST_CASE("adapter construction validates columns") {
  const auto m = oracle::random_model(2);
  CHECK_THROWS_AS(PartialLinearAdapter::zeros(m, 0, {1, 0}), InvalidArgument);
  CHECK_THROWS_AS(PartialLinearAdapter::zeros(m, 0, {1, 1}), InvalidArgument);
  CHECK_THROWS_AS(PartialLinearAdapter::zeros(m, 0, {m.layers[0].in_width()}), InvalidArgument);
  CHECK_THROWS_AS(PartialLinearAdapter::zeros(m, 99, {0}), InvalidArgument);
  const auto a = PartialLinearAdapter::zeros(m, 1, {0, 2});
  CHECK(a.delta.rows == m.layers[1].out_width());
  CHECK(a.delta.cols == 2);
  for (double v : a.delta.data) CHECK(v == 0.0);
}

TEST_CASE("merge: hand example and zero delta") {
  ToyModel m;
  m.layers = {DenseLayer{Matrix::from_rows({{1, 1}, {1, 1}}), {0, 0}, Activation::identity}};
  m.roles = {LayerRole::head};
  m.feature_tap = 1;
  auto a = PartialLinearAdapter::zeros(m, 0, {1});
  CHECK(merge(a, m.layers[0]) == m.layers[0]);
  a.delta = Matrix::from_rows({{2}, {3}});
  CHECK(merge(a, m.layers[0]).weights == Matrix::from_rows({{1, 3}, {1, 4}}));
  a.columns = {5};
  CHECK_THROWS_AS(merge(a, m.layers[0]), InvalidArgument);
}

TEST_CASE("merge: lossless over seeds") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed + 100);
    const auto m = oracle::random_model(seed, ModelShape{});
    std::vector<PartialLinearAdapter> adapters{random_adapter(m, 0, rng), random_adapter(m, 1, rng),
                                               random_adapter(m, 2, rng)};
    const auto merged = merge_all(m, adapters);
    const auto x = oracle::random_matrix(rng, 100, m.input_width());
    CHECK(max_abs_diff(forward(merged, x).output, forward(m, x, adapters).output) <= 1e-10);
    // untouched columns stay bit-identical
    for (const auto& a : adapters)
      for (std::size_t c = 0; c < m.layers[a.layer].in_width(); ++c) {
        if (std::find(a.columns.begin(), a.columns.end(), c) != a.columns.end()) continue;
        for (std::size_t o = 0; o < m.layers[a.layer].out_width(); ++o)
          CHECK(merged.layers[a.layer].weights(o, c) == m.layers[a.layer].weights(o, c));
      }
  }
}

TEST_CASE("huber: closed forms") {
  auto h = huber(std::vector<double>{0.0}, 1.0);
  CHECK(h.loss == 0.0);
  CHECK(h.grad[0] == 0.0);
  CHECK(huber(std::vector<double>{0.5}, 1.0).loss == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(huber(std::vector<double>{2.0}, 1.0).loss == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(huber(std::vector<double>{-2.0}, 1.0).grad[0] == -1.0);
  CHECK_THROWS_AS(huber(std::vector<double>{}, 1.0), InvalidArgument);
  CHECK_THROWS_AS(huber(std::vector<double>{1.0}, 0.0), InvalidArgument);
}

TEST_CASE("huber: continuity at the transition") {
  for (double delta : {0.3, 1.0, 2.5}) {
    const auto lo = huber(std::vector<double>{delta - 1e-9}, delta);
    const auto hi = huber(std::vector<double>{delta + 1e-9}, delta);
    CHECK(std::abs(lo.loss - hi.loss) <= 1e-6);
    CHECK(std::abs(lo.grad[0] - hi.grad[0]) <= 1e-6);
  }
}

TEST_CASE("huber: gradient is the derivative of the mean") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0, 2);
  std::vector<double> r(9);
  for (auto& v : r) v = n(rng);
  const auto h = huber(r, 1.0);
  for (std::size_t i = 0; i < r.size(); ++i) {
    auto up = r, down = r;
    up[i] += 1e-6;
    down[i] -= 1e-6;
    const double fd = (huber(up, 1.0).loss - huber(down, 1.0).loss) / 2e-6;
    CHECK(oracle::rel_error(h.grad[i], fd) <= 1e-6);
  }
}

TEST_CASE("gradients: scalar squared loss") {
  const auto m = scalar_model(2.0);
  const auto g = param_gradients(m, {}, Matrix::from_rows({{1.0}}), SupervisedLossSpec{Matrix::from_rows({{0.0}})},
                                 GradientScope::parameters);
  CHECK(g.layers[0].weights(0, 0) == doctest::Approx(2.0));
  CHECK(g.loss == doctest::Approx(2.0));
}

TEST_CASE("gradients: retain loss at the teacher is zero") {
  const auto m = oracle::random_model(6);
  const auto teacher = snapshot_teacher(m);
  std::mt19937_64 rng(1);
  const auto g = param_gradients(m, {}, oracle::random_matrix(rng, 5, m.input_width()), RetainLossSpec{&teacher, 1.0},
                                 GradientScope::parameters);
  CHECK(g.loss == 0.0);
  for (const auto& l : g.layers) {
    for (double v : l.weights.data) CHECK(v == 0.0);
    for (double v : l.bias) CHECK(v == 0.0);
  }
}

TEST_CASE("gradients: feature loss without teacher is a config error") {
  const auto m = oracle::random_model(6);
  CHECK_THROWS_AS(param_gradients(m, {}, Matrix(1, m.input_width()), RetainLossSpec{nullptr, 1.0},
                                  GradientScope::parameters),
                  ConfigError);
  CHECK_THROWS_AS(param_gradients(m, {}, Matrix(0, m.input_width()), SupervisedLossSpec{Matrix(0, 2)},
                                  GradientScope::parameters),
                  InvalidArgument);
}

TEST_CASE("gradients: finite-difference oracle on random models") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    std::mt19937_64 rng(seed * 31 + 7);
    auto m = oracle::random_model(seed);
    REQUIRE(m.parameter_count() <= 200);
    const auto x = oracle::random_matrix(rng, 4, m.input_width());
    const auto other = snapshot_teacher(oracle::random_model(seed + 1000));

    CAPTURE(seed);
    CHECK(oracle::check_parameter_gradients(m, x, SupervisedLossSpec{oracle::random_matrix(rng, 4, 2)}).worst_rel <=
          1e-4);
    CHECK(oracle::check_parameter_gradients(m, x, RetainLossSpec{&other, 1.0}).worst_rel <= 1e-4);
    CHECK(oracle::check_parameter_gradients(m, x, ForgetLossSpec{&other, oracle::random_matrix(rng, 4, 3), 0.5})
              .worst_rel <= 1e-4);

    std::vector<PartialLinearAdapter> adapters{random_adapter(m, 0, rng), random_adapter(m, 1, rng)};
    const auto self = snapshot_teacher(m);
    CHECK(oracle::check_adapter_gradients(m, adapters, x, RetainLossSpec{&self, 1.0}).worst_rel <= 1e-4);
    CHECK(oracle::check_adapter_gradients(m, adapters, x, ForgetLossSpec{&self, oracle::random_matrix(rng, 4, 3), 1.0})
              .worst_rel <= 1e-4);
  }
}

TEST_CASE("teacher snapshot: copy semantics") {
  auto m = oracle::random_model(9);
  const auto t = snapshot_teacher(m);
  const auto before = t.model();
  std::mt19937_64 rng(2);
  const auto x = oracle::random_matrix(rng, 5, m.input_width());
  const auto out = forward(m, x).output;
  m.layers[0].weights.data[0] += 1.0;
  CHECK(t.model() == before);
  CHECK(forward(t.model(), x).output == out);
  CHECK(snapshot_teacher(t.restore()).model() == t.model());
}

TEST_CASE("determinism: same seed, same model") {
  CHECK(make_toy_model(ModelShape{}, 42) == make_toy_model(ModelShape{}, 42));
  CHECK_FALSE(make_toy_model(ModelShape{}, 42) == make_toy_model(ModelShape{}, 43));
}

TEST_CASE("validate: bad tap and dimension chain") {
  auto m = make_toy_model(ModelShape{}, 1);
  m.feature_tap = 99;
  CHECK_THROWS_AS(m.validate(), ConfigError);
  m = make_toy_model(ModelShape{}, 1);
  m.layers[1].weights = Matrix(8, 5);
  CHECK_THROWS_AS(m.validate(), ConfigError);
}

TEST_CASE("checkpoint: bit-exact round trip") {
  auto m = oracle::random_model(12, ModelShape{});
  m.layers[0].weights.data[0] = 0.1;  // not representable in short decimal
  m.layers[0].weights.data[1] = -1e-300;
  const auto dir = std::filesystem::temp_directory_path() / "xstack_test_model";
  std::filesystem::create_directories(dir);
  save_model(m, dir / "m.json");
  CHECK(load_model(dir / "m.json") == m);
  CHECK(model_from_json(model_to_json(m)) == m);
  for (double v : {0.1, -0.0, 1e-310, 3.141592653589793, -7.25e200}) {
    const double back = decode_real(nlohmann::json(encode_real(v)));
    CHECK(std::memcmp(&back, &v, sizeof v) == 0);
  }
  auto j = model_to_json(m);
  j["format_version"] = 999;
  CHECK_THROWS_AS(model_from_json(j), ConfigError);
  std::filesystem::remove_all(dir);
}
