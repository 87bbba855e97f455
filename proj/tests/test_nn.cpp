#include <catch2/catch_amalgamated.hpp>

#include "fixsearch/nn/grad_check.hpp"
#include "fixsearch/nn/ops.hpp"
#include "fixsearch/nn/optim.hpp"
#include "fixsearch/nn/serialize.hpp"
#include "oracles.hpp"

using namespace fixsearch;
using namespace fixsearch::nn;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  auto t = Tensor::zeros(shape);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

oracles::NaiveTensor to_naive(const Tensor& t) {
  return {t.shape(), t.values()};
}

}  // namespace

TEST_CASE("conv2d: 1x1 identity kernel reproduces the input") {
  Rng rng(1);
  auto x = random_tensor(rng, {1, 1, 5, 7});
  auto w = Tensor::from({1, 1, 1, 1}, {1.0});
  auto y = conv2d(x, w, Tensor(), 1, 1, Padding::Same);
  CHECK(y.shape() == x.shape());
  for (std::size_t i = 0; i < x.values().size(); ++i) CHECK(y.values()[i] == x.values()[i]);
}

TEST_CASE("conv2d: all-ones 3x3 kernel stamps the footprint at a hot pixel") {
  auto x = Tensor::zeros({1, 1, 5, 5});
  x.values()[2 * 5 + 2] = 1.0;
  auto w = Tensor::from({1, 1, 3, 3}, std::vector<double>(9, 1.0));
  auto y = conv2d(x, w, Tensor(), 1, 1, Padding::Same);
  for (int yy = 0; yy < 5; ++yy)
    for (int xx = 0; xx < 5; ++xx) {
      const bool in_footprint = std::abs(yy - 2) <= 1 && std::abs(xx - 2) <= 1;
      CHECK(y.values()[static_cast<std::size_t>(yy * 5 + xx)] == (in_footprint ? 1.0 : 0.0));
    }
}

TEST_CASE("conv2d: dilation 2 same padding matches the naive reference and keeps dims") {
  Rng rng(2);
  auto x = random_tensor(rng, {1, 2, 8, 8});
  auto w = random_tensor(rng, {3, 2, 3, 3});
  auto b = random_tensor(rng, {3});
  auto y = conv2d(x, w, b, 1, 2, Padding::Same);
  REQUIRE(y.shape() == Shape{1, 3, 8, 8});  // effective 5x5 field, dims preserved
  auto ref = oracles::naive_conv2d(to_naive(x), to_naive(w), b.values(), 1, 2, true);
  for (std::size_t i = 0; i < ref.v.size(); ++i)
    REQUIRE(y.values()[i] == Catch::Approx(ref.v[i]).margin(1e-12));
}

TEST_CASE("conv2d: random small shapes match the naive reference exactly") {
  Rng rng(3);
  for (int iter = 0; iter < 60; ++iter) {
    const std::int64_t n = 1 + static_cast<std::int64_t>(rng.below(2));
    const std::int64_t ci = 1 + static_cast<std::int64_t>(rng.below(4));
    const std::int64_t co = 1 + static_cast<std::int64_t>(rng.below(4));
    const std::int64_t h = 3 + static_cast<std::int64_t>(rng.below(6));
    const std::int64_t w = 3 + static_cast<std::int64_t>(rng.below(6));
    const std::int64_t k = 1 + static_cast<std::int64_t>(rng.below(3));
    const std::int64_t stride = 1 + static_cast<std::int64_t>(rng.below(2));
    const std::int64_t dil = 1 + static_cast<std::int64_t>(rng.below(2));
    const bool same = rng.uniform() < 0.5;
    if (!same && ((k - 1) * dil + 1 > std::min(h, w))) continue;
    auto x = random_tensor(rng, {n, ci, h, w});
    auto wt = random_tensor(rng, {co, ci, k, k});
    auto b = random_tensor(rng, {co});
    auto y = conv2d(x, wt, b, stride, dil, same ? Padding::Same : Padding::Valid);
    auto ref = oracles::naive_conv2d(to_naive(x), to_naive(wt), b.values(), stride, dil, same);
    REQUIRE(y.shape() == ref.shape);
    for (std::size_t i = 0; i < ref.v.size(); ++i)
      REQUIRE(y.values()[i] == Catch::Approx(ref.v[i]).margin(1e-12));
  }
}

TEST_CASE("conv2d: same padding preserves dims for all tested kernels and dilations") {
  Rng rng(4);
  for (std::int64_t k : {1, 2, 3, 5}) {
    for (std::int64_t dil : {1, 2, 3, 4, 12}) {
      auto x = random_tensor(rng, {1, 1, 8, 16});
      auto w = random_tensor(rng, {1, 1, k, k});
      auto y = conv2d(x, w, Tensor(), 1, dil, Padding::Same);
      CHECK(y.dim(2) == 8);
      CHECK(y.dim(3) == 16);
    }
  }
}

TEST_CASE("conv2d: shape errors carry both shapes") {
  Rng rng(5);
  auto x = random_tensor(rng, {1, 3, 8, 8});
  auto w = random_tensor(rng, {4, 2, 3, 3});
  CHECK_THROWS_WITH(conv2d(x, w, Tensor()), Catch::Matchers::ContainsSubstring("[1,3,8,8]") &&
                                                Catch::Matchers::ContainsSubstring("[4,2,3,3]"));
}

TEST_CASE("max_pool2d: 2x2 stride 2 block maxima") {
  auto x = Tensor::from({1, 1, 4, 4},
                        {1, 2, 3, 4,
                         5, 6, 7, 8,
                         9, 10, 11, 12,
                         13, 14, 15, 16});
  auto y = max_pool2d(x, 2, 2, Padding::Valid);
  REQUIRE(y.shape() == Shape{1, 1, 2, 2});
  CHECK(y.values() == std::vector<double>{6, 8, 14, 16});
}

TEST_CASE("max_pool2d: stride-1 valid padding keeps near-full resolution") {
  Rng rng(6);
  auto x = random_tensor(rng, {1, 1, 4, 4});
  auto y = max_pool2d(x, 2, 1, Padding::Valid);
  REQUIRE(y.shape() == Shape{1, 1, 3, 3});
  auto ref = oracles::naive_max_pool2d(to_naive(x), 2, 1, false);
  for (std::size_t i = 0; i < ref.v.size(); ++i) CHECK(y.values()[i] == ref.v[i]);
}

TEST_CASE("max_pool2d: same padding at stride 1 preserves dims (removed-stride pools)") {
  Rng rng(7);
  auto x = random_tensor(rng, {1, 2, 8, 16});
  auto y = max_pool2d(x, 2, 1, Padding::Same);
  CHECK(y.shape() == Shape{1, 2, 8, 16});
  auto ref = oracles::naive_max_pool2d(to_naive(x), 2, 1, true);
  for (std::size_t i = 0; i < ref.v.size(); ++i) CHECK(y.values()[i] == ref.v[i]);
}

TEST_CASE("max_pool2d: random shapes match the naive reference") {
  Rng rng(8);
  for (int iter = 0; iter < 40; ++iter) {
    const std::int64_t h = 2 + static_cast<std::int64_t>(rng.below(7));
    const std::int64_t w = 2 + static_cast<std::int64_t>(rng.below(7));
    const std::int64_t window = 1 + static_cast<std::int64_t>(rng.below(3));
    const std::int64_t stride = 1 + static_cast<std::int64_t>(rng.below(2));
    const bool same = rng.uniform() < 0.5;
    if (window > std::min(h, w)) continue;
    auto x = random_tensor(rng, {1, 2, h, w});
    auto y = max_pool2d(x, window, stride, same ? Padding::Same : Padding::Valid);
    auto ref = oracles::naive_max_pool2d(to_naive(x), window, stride, same);
    REQUIRE(y.shape() == ref.shape);
    for (std::size_t i = 0; i < ref.v.size(); ++i) REQUIRE(y.values()[i] == ref.v[i]);
  }
}

TEST_CASE("max_pool2d: constant input routes gradient to one element per window") {
  auto x = Tensor::from({1, 1, 4, 4}, std::vector<double>(16, 3.0), true);
  auto y = max_pool2d(x, 2, 2, Padding::Valid);
  for (double v : y.values()) CHECK(v == 3.0);
  sum(y).backward();
  // First occurrence in scan order wins the tie: the top-left of each window.
  std::vector<double> expect(16, 0.0);
  expect[0] = expect[2] = expect[8] = expect[10] = 1.0;
  CHECK(x.grad() == expect);
  CHECK_THROWS_AS(max_pool2d(x, 5, 1, Padding::Valid), ShapeError);
}

TEST_CASE("bilinear_upsample2d: constant input stays constant") {
  auto x = Tensor::full({1, 1, 3, 5}, 2.5);
  auto y = bilinear_upsample2d(x);
  REQUIRE(y.shape() == Shape{1, 1, 6, 10});
  for (double v : y.values()) CHECK(v == Catch::Approx(2.5).margin(1e-15));
}

TEST_CASE("bilinear_upsample2d: 2x2 checker matches direct interpolation arithmetic") {
  auto x = Tensor::from({1, 1, 2, 2}, {0, 1, 1, 0});
  auto y = bilinear_upsample2d(x);
  auto ref = oracles::naive_bilinear_up2(to_naive(x));
  REQUIRE(y.shape() == ref.shape);
  for (std::size_t i = 0; i < ref.v.size(); ++i)
    CHECK(y.values()[i] == Catch::Approx(ref.v[i]).margin(1e-15));
  // Hand-checked corners: edge-clamped samples reproduce the corner values.
  CHECK(y.values()[0] == 0.0);
  CHECK(y.values()[3] == 1.0);
}

TEST_CASE("bilinear_upsample2d: spatial mean preserved within 1e-12") {
  Rng rng(9);
  auto x = random_tensor(rng, {1, 3, 4, 6});
  auto y = bilinear_upsample2d(x);
  for (std::int64_t c = 0; c < 3; ++c) {
    double mx = 0, my = 0;
    for (std::int64_t i = 0; i < 24; ++i) mx += x.values()[static_cast<std::size_t>(c * 24 + i)];
    for (std::int64_t i = 0; i < 96; ++i) my += y.values()[static_cast<std::size_t>(c * 96 + i)];
    CHECK(my / 96.0 == Catch::Approx(mx / 24.0).margin(1e-12));
  }
}

TEST_CASE("bilinear_upsample2d: random inputs match the naive reference") {
  Rng rng(10);
  for (int iter = 0; iter < 30; ++iter) {
    auto x = random_tensor(rng, {1, 1 + static_cast<std::int64_t>(rng.below(3)),
                                 1 + static_cast<std::int64_t>(rng.below(6)),
                                 1 + static_cast<std::int64_t>(rng.below(6))});
    auto y = bilinear_upsample2d(x);
    auto ref = oracles::naive_bilinear_up2(to_naive(x));
    REQUIRE(y.shape() == ref.shape);
    for (std::size_t i = 0; i < ref.v.size(); ++i)
      REQUIRE(y.values()[i] == Catch::Approx(ref.v[i]).margin(1e-12));
  }
  CHECK_THROWS_AS(bilinear_upsample2d(Tensor::zeros({2, 2})), ShapeError);
}

TEST_CASE("backward: linear loss gives grad(w) = x") {
  Rng rng(11);
  auto x = random_tensor(rng, {1, 1, 3, 3});
  auto w = random_tensor(rng, {1, 1, 3, 3});
  w.set_requires_grad(true);
  auto loss = sum(mul(w, x));
  loss.backward();
  for (std::size_t i = 0; i < 9; ++i) CHECK(w.grad()[i] == Catch::Approx(x.values()[i]).margin(1e-15));
}

TEST_CASE("backward: dead ReLU has zero gradient") {
  auto w = Tensor::from({4}, {-1.0, -0.5, -2.0, -3.0}, true);
  auto loss = sum(relu(w));
  loss.backward();
  for (double g : w.grad()) CHECK(g == 0.0);
}

TEST_CASE("backward: accumulates across calls, non-scalar rejected") {
  auto w = Tensor::from({2}, {1.0, 2.0}, true);
  auto loss = sum(mul(w, w));
  loss.backward();
  const double g0 = w.grad()[0];
  loss.backward();
  CHECK(w.grad()[0] == 2 * g0);
  CHECK_THROWS_AS(mul(w, w).backward(), UsageError);
}

TEST_CASE("backward: three-layer toy net passes the finite-difference oracle") {
  Rng rng(12);
  auto x = random_tensor(rng, {1, 2, 6, 6}, 0.1, 1.0);
  auto w1 = random_tensor(rng, {3, 2, 3, 3});
  auto b1 = random_tensor(rng, {3});
  auto w2 = random_tensor(rng, {2, 3, 3, 3});
  auto b2 = random_tensor(rng, {2});
  auto w3 = random_tensor(rng, {1, 2, 1, 1});
  auto fn = [&](const std::vector<Tensor>& params) {
    auto h1 = relu(conv2d(x, params[0], params[1], 1, 1, Padding::Same));
    auto h2 = relu(conv2d(max_pool2d(h1, 2, 2, Padding::Same), params[2], params[3], 1, 2, Padding::Same));
    auto h3 = conv2d(bilinear_upsample2d(h2), params[4], Tensor(), 1, 1, Padding::Same);
    return sum(mul(h3, h3));
  };
  auto report = grad_check(fn, {w1, b1, w2, b2, w3}, 120, 1e-5, 1e-4, 77);
  INFO(report.worst);
  CHECK(report.pass);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("grad_check: linear layer is exact to 1e-8") {
  Rng rng(13);
  auto x = random_tensor(rng, {1, 2, 4, 4});
  auto w = random_tensor(rng, {2, 2, 3, 3});
  auto b = random_tensor(rng, {2});
  auto fn = [&](const std::vector<Tensor>& params) {
    return sum(conv2d(x, params[0], params[1], 1, 1, Padding::Same));
  };
  auto report = grad_check(fn, {w, b}, 100, 1e-5, 1e-8, 3);
  INFO(report.worst);
  CHECK(report.max_rel_err < 1e-8);
}

TEST_CASE("grad_check: every primitive at tolerance 1e-4") {
  Rng rng(14);
  struct Case {
    const char* name;
    std::function<Tensor(const std::vector<Tensor>&)> fn;
    std::vector<Tensor> inputs;
  };
  auto x44 = random_tensor(rng, {1, 2, 4, 4}, 0.1, 1.0);
  std::vector<Case> cases;
  cases.push_back({"conv2d", [&](const std::vector<Tensor>& p) {
                     return sum(mul(conv2d(p[0], p[1], p[2], 1, 2, Padding::Same),
                                    conv2d(p[0], p[1], p[2], 1, 2, Padding::Same)));
                   },
                   {random_tensor(rng, {1, 2, 5, 5}), random_tensor(rng, {2, 2, 3, 3}),
                    random_tensor(rng, {2})}});
  cases.push_back({"depthwise_xcorr2d", [&](const std::vector<Tensor>& p) {
                     return sum(mul(depthwise_xcorr2d(p[0], p[1]), depthwise_xcorr2d(p[0], p[1])));
                   },
                   {random_tensor(rng, {1, 3, 6, 6}), random_tensor(rng, {1, 3, 2, 2})}});
  cases.push_back({"max_pool2d", [&](const std::vector<Tensor>& p) {
                     return sum(mul(max_pool2d(p[0], 2, 1, Padding::Same),
                                    max_pool2d(p[0], 2, 1, Padding::Same)));
                   },
                   {random_tensor(rng, {1, 2, 5, 5})}});
  cases.push_back({"bilinear_upsample2d", [&](const std::vector<Tensor>& p) {
                     return sum(mul(bilinear_upsample2d(p[0]), bilinear_upsample2d(p[0])));
                   },
                   {random_tensor(rng, {1, 2, 3, 4})}});
  cases.push_back({"relu", [&](const std::vector<Tensor>& p) { return sum(mul(relu(p[0]), relu(p[0]))); },
                   {random_tensor(rng, {1, 1, 4, 4})}});
  cases.push_back({"log/add/div/mul", [&](const std::vector<Tensor>& p) {
                     return sum(mul(nn::log(add_scalar(p[0], 2.0)), div(p[0], add_scalar(p[1], 3.0))));
                   },
                   {random_tensor(rng, {6}, 0.5, 1.5), random_tensor(rng, {6}, 0.5, 1.5)}});
  cases.push_back({"reduce_min/max", [&](const std::vector<Tensor>& p) {
                     return mul(reduce_max(p[0]), sub(reduce_max(p[0]), reduce_min(p[0])));
                   },
                   {random_tensor(rng, {1, 1, 3, 5})}});
  cases.push_back({"mean/broadcast/concat", [&](const std::vector<Tensor>& p) {
                     auto m = broadcast_spatial(mean_spatial(p[0]), 4, 4);
                     return sum(mul(concat_channels({p[0], m}), concat_channels({m, p[0]})));
                   },
                   {random_tensor(rng, {1, 2, 4, 4})}});
  for (auto& c : cases) {
    auto report = grad_check(c.fn, c.inputs, 100, 1e-5, 1e-4, 5);
    INFO(c.name << ": " << report.worst);
    CHECK(report.pass);
  }
}

TEST_CASE("depthwise_xcorr2d: 1x1 filter scales each channel") {
  Rng rng(15);
  auto x = random_tensor(rng, {1, 3, 4, 4});
  auto f = Tensor::from({1, 3, 1, 1}, {2.0, -1.0, 0.5});
  auto y = depthwise_xcorr2d(x, f);
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t i = 0; i < 16; ++i)
      CHECK(y.values()[static_cast<std::size_t>(c * 16 + i)] ==
            Catch::Approx(f.values()[static_cast<std::size_t>(c)] *
                          x.values()[static_cast<std::size_t>(c * 16 + i)]).margin(1e-15));
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  auto w = Tensor::from({3}, {1.0, -2.0, 3.0}, true);
  w.zero_grad();
  Adam adam({w}, {.lr = 0.1});
  adam.step();
  CHECK(w.values() == std::vector<double>{1.0, -2.0, 3.0});
}

TEST_CASE("adam: first step from zero state moves by ~lr*sign(g)") {
  auto w = Tensor::from({2}, {0.5, -0.5}, true);
  w.zero_grad();
  w.grad()[0] = 0.3;
  w.grad()[1] = -7.0;
  Adam adam({w}, {.lr = 0.01});
  adam.step();
  // With bias correction, m_hat = g and v_hat = g^2, so the update is
  // -lr * g / (|g| + eps) = -lr * sign(g) up to eps.
  CHECK(w.values()[0] == Catch::Approx(0.5 - 0.01).margin(1e-6));
  CHECK(w.values()[1] == Catch::Approx(-0.5 + 0.01).margin(1e-6));
  CHECK(adam.step_count() == 1);
}

TEST_CASE("adam: 200 steps on a quadratic bowl cut the loss by 99%") {
  Rng rng(16);
  auto w = random_tensor(rng, {8}, -2.0, 2.0);
  w.set_requires_grad(true);
  Adam adam({w}, {.lr = 0.05});
  auto loss_value = [&] {
    double s = 0;
    for (double v : w.values()) s += v * v;
    return s;
  };
  const double initial = loss_value();
  double final_loss = initial;
  for (int i = 0; i < 200; ++i) {
    adam.zero_grad();
    auto loss = sum(mul(w, w));
    loss.backward();
    adam.step();
    final_loss = loss_value();
  }
  CHECK(final_loss <= 0.01 * initial);
}

TEST_CASE("adam: stepping without gradients is a usage error") {
  auto w = Tensor::from({2}, {1.0, 2.0}, true);
  Adam adam({w}, {});
  CHECK_THROWS_AS(adam.step(), UsageError);
  auto leaf = Tensor::from({2}, {1.0, 2.0}, false);
  CHECK_THROWS_AS(Adam({leaf}, {}), UsageError);
}

TEST_CASE("checkpoint: NNP1 round trip is bit-exact and validates structure") {
  Rng rng(17);
  std::vector<std::pair<std::string, Tensor>> params = {
      {"enc.b1.c0.w", random_tensor(rng, {4, 3, 3, 3})},
      {"enc.b1.c0.b", random_tensor(rng, {4})},
      {"dec.out.w", random_tensor(rng, {1, 2, 3, 3})},
  };
  auto bytes = serialize_params(params);
  auto back = deserialize_params(bytes);
  REQUIRE(back.size() == params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    CHECK(back[i].first == params[i].first);
    REQUIRE(back[i].second.shape() == params[i].second.shape());
    for (std::size_t k = 0; k < params[i].second.values().size(); ++k)
      REQUIRE(back[i].second.values()[k] == params[i].second.values()[k]);
  }
  auto again = serialize_params(back);
  REQUIRE(again == bytes);

  auto corrupt = bytes;
  corrupt[1] = 'X';
  CHECK_THROWS_AS(deserialize_params(corrupt), FormatError);
  auto truncated = bytes;
  truncated.resize(truncated.size() - 5);
  CHECK_THROWS_AS(deserialize_params(truncated), FormatError);
}

TEST_CASE("tensor: shape/value validation and item()") {
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  CHECK_THROWS_AS(Tensor::zeros({0, 3}), ShapeError);
  CHECK(Tensor::scalar(4.5).item() == 4.5);
  CHECK_THROWS_AS(Tensor::zeros({3}).item(), UsageError);
}

TEST_CASE("no-grad mode: ops record no graph") {
  auto w = Tensor::from({2}, {1.0, 2.0}, true);
  Tensor y;
  {
    NoGradGuard guard;
    y = sum(mul(w, w));
  }
  CHECK_FALSE(y.requires_grad());
}
