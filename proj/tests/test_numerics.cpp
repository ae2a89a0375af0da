#include <doctest.h>

#include <cmath>
#include <random>

#include "kga/autodiff.hpp"
#include "kga/kernels.hpp"
#include "kga/rmsprop.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace kga;
using kga::ad::Graph;
using kga::ad::Var;

namespace {

TensorD tensor_from(const Shape& shape, const oracle::Flat& v) {
  return TensorD(shape, Eigen::Map<const Eigen::ArrayXd>(v.data(), static_cast<Index>(v.size())));
}

oracle::Flat flat_of(const TensorD& t) { return {t.data(), t.data() + t.size()}; }

/// Analytic gradient of `build` at `x` against central differences.
void check_gradient(const TensorD& x, const std::function<Var(Graph&, Var)>& build, double tol = 1e-4) {
  Graph g;
  const Var leaf = g.leaf(x);
  g.backward(build(g, leaf));
  const Eigen::ArrayXd analytic = g.grad(leaf);
  const oracle::Flat numeric = oracle::central_differences(flat_of(x), [&](const oracle::Flat& v) {
    Graph fg;
    return build(fg, fg.constant(tensor_from(x.shape(), v))).value()[0];
  });
  for (Index k = 0; k < x.size(); ++k) {
    CHECK(test::relative_error(analytic[k], numeric[static_cast<std::size_t>(k)]) < tol);
  }
}

}  // namespace

TEST_CASE("conv2d: zero input and zero bias give zero output") {
  std::mt19937_64 rng(1);
  Graph g;
  const Var in = g.constant(TensorD({1, 3, 3}));
  const Var k = g.constant(tensor_from({1, 1, 3, 3}, oracle::random_flat(9, rng)));
  const Var b = g.constant(TensorD({1}));
  CHECK((ad::conv2d(in, k, b).value().values() == 0.0).all());
}

TEST_CASE("conv2d: 1x1 unit kernel is the identity") {
  std::mt19937_64 rng(2);
  Graph g;
  const TensorD x = tensor_from({1, 5, 4}, oracle::random_flat(20, rng));
  const Var out = ad::conv2d(g.constant(x), g.constant(TensorD::constant({1, 1, 1, 1}, 1.0)), g.constant(TensorD({1})));
  CHECK(out.value() == x);
}

TEST_CASE("conv2d matches the six-loop oracle for odd, even and channel-reducing shapes") {
  std::mt19937_64 rng(3);
  struct Case { int c_in, c_out, k, h, w; };
  for (const Case c : {Case{2, 4, 6, 8, 8}, Case{2, 16, 6, 7, 9}, Case{16, 2, 6, 8, 8}, Case{16, 16, 3, 6, 5},
                       Case{3, 1, 4, 5, 5}, Case{1, 1, 1, 3, 3}}) {
    const auto in = oracle::random_flat(static_cast<std::size_t>(c.c_in * c.h * c.w), rng);
    const auto ker = oracle::random_flat(static_cast<std::size_t>(c.c_out * c.c_in * c.k * c.k), rng);
    const auto bias = oracle::random_flat(static_cast<std::size_t>(c.c_out), rng);
    const auto expected = oracle::conv2d(in, c.c_in, c.h, c.w, ker, c.c_out, c.k, bias);
    Graph g;
    const Var out = ad::conv2d(g.constant(tensor_from({c.c_in, c.h, c.w}, in)),
                               g.constant(tensor_from({c.c_out, c.c_in, c.k, c.k}, ker)),
                               g.constant(tensor_from({c.c_out}, bias)));
    REQUIRE(out.shape() == Shape{c.c_out, c.h, c.w});
    CHECK(test::max_abs_diff(flat_of(out.value()), expected) <= 1e-12);
  }
}

TEST_CASE("conv2d is linear in its input for a fixed kernel") {
  std::mt19937_64 rng(4);
  const auto x = oracle::random_flat(2 * 8 * 8, rng);
  const auto y = oracle::random_flat(2 * 8 * 8, rng);
  const TensorD ker = tensor_from({3, 2, 6, 6}, oracle::random_flat(3 * 2 * 36, rng));
  const double a = 1.7, b = -0.3;
  oracle::Flat mix(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) mix[k] = a * x[k] + b * y[k];
  Graph g;
  auto conv = [&](const oracle::Flat& v) { return ad::conv2d(g.constant(tensor_from({2, 8, 8}, v)), g.constant(ker)); };
  const Eigen::ArrayXd lhs = conv(mix).value().values();
  const Eigen::ArrayXd rhs = a * conv(x).value().values() + b * conv(y).value().values();
  CHECK((lhs - rhs).abs().maxCoeff() <= 1e-10);
}

TEST_CASE("conv2d rejects mismatched channels and bad kernels") {
  Graph g;
  const Var in = g.constant(TensorD({3, 4, 4}));
  CHECK_THROWS_AS(ad::conv2d(in, g.constant(TensorD({2, 2, 3, 3}))), Error);
  CHECK_THROWS_AS(ad::conv2d(in, g.constant(TensorD({2, 3, 3, 2}))), Error);
  CHECK_THROWS_AS(ad::conv2d(in, g.constant(TensorD({2, 3, 3, 3})), g.constant(TensorD({3}))), Error);
  CHECK_THROWS_AS(TensorD({3, 0, 4}), Error);
}

TEST_CASE("sigmoid and softmax_channels values") {
  Graph g;
  CHECK(ad::sigmoid(g.constant(TensorD({1}))).value()[0] == 0.5);

  const Var equal = ad::softmax_channels(g.constant(TensorD({2, 3, 3})));
  CHECK((equal.value().values() == 0.5).all());

  std::mt19937_64 rng(5);
  const auto logits = oracle::random_flat(2 * 4 * 5, rng, -8.0, 8.0);
  const Var sm = ad::softmax_channels(g.constant(tensor_from({2, 4, 5}, logits)));
  CHECK(test::max_abs_diff(flat_of(sm.value()), oracle::softmax2(logits, 20)) <= 1e-12);
  const auto planes = sm.value().planes();
  CHECK(((planes.row(0) + planes.row(1)).array() - 1.0).abs().maxCoeff() <= 1e-12);

  oracle::Flat shifted = logits;
  for (double& v : shifted) v += 3.25;
  const Var sm2 = ad::softmax_channels(g.constant(tensor_from({2, 4, 5}, shifted)));
  CHECK((sm2.value().values() - sm.value().values()).abs().maxCoeff() <= 1e-10);

  CHECK_THROWS_AS(ad::softmax_channels(g.constant(TensorD({3, 2, 2}))), Error);
}

TEST_CASE("bce_loss values") {
  Graph g;
  std::mt19937_64 rng(6);
  const TensorD y = tensor_from({4, 4}, oracle::random_binary(16, rng));
  const Var half = ad::bce_loss(g.constant(TensorD::constant({4, 4}, 0.5)), y);
  CHECK(half.value()[0] == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  CHECK(ad::bce_loss(g.constant(y), y).value()[0] <= 1e-6);

  const auto p = oracle::random_flat(16, rng, 0.01, 0.99);
  const Var loss = ad::bce_loss(g.constant(tensor_from({4, 4}, p)), y);
  CHECK(std::abs(loss.value()[0] - oracle::bce(p, flat_of(y))) <= 1e-12);

  CHECK_THROWS_AS(ad::bce_loss(g.constant(TensorD({4, 3})), y), Error);
}

TEST_CASE("backward: closed forms and accumulation") {
  std::mt19937_64 rng(7);
  Graph g;
  const Var x = g.leaf(tensor_from({2, 3}, oracle::random_flat(6, rng)));
  const Var s = ad::sum(x);
  g.backward(s);
  CHECK((g.grad(x) == 1.0).all());
  g.backward(s);
  CHECK((g.grad(x) == 2.0).all());
  g.zero_grad();
  g.backward(s);
  CHECK((g.grad(x) == 1.0).all());

  Graph g2;
  const double w0 = 0.37, c = -2.5;
  const Var w = g2.leaf(TensorD::constant({1}, w0));
  g2.backward(ad::scale(ad::sigmoid(w), c));
  const double sw = 1.0 / (1.0 + std::exp(-w0));
  CHECK(g2.grad(w)[0] == doctest::Approx(c * sw * (1.0 - sw)).epsilon(1e-14));

}

TEST_CASE("backward rejects non-scalar losses and foreign variables") {
  Graph g;
  const Var x = g.leaf(TensorD({2, 2}));
  try {
    g.backward(x * x);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNonScalarBackward);
  }
  Graph other;
  const Var y = other.leaf(TensorD({1}));
  CHECK_THROWS_AS(g.backward(y), Error);
  CHECK_THROWS_AS(g.record(TensorD({1}), {g.size() + 3}, {}), Error);
}

TEST_CASE("every differentiable op passes a finite-difference check") {
  std::mt19937_64 rng(8);
  const TensorD a = tensor_from({2, 3, 4}, oracle::random_flat(24, rng));
  const TensorD b = tensor_from({2, 3, 4}, oracle::random_flat(24, rng));
  const TensorD weights = tensor_from({24}, oracle::random_flat(24, rng));
  // Weighted sum makes each output element's gradient distinct.
  auto readout = [&](Graph& g, Var v) {
    TensorD w(v.shape(), weights.values().head(v.value().size()));
    return ad::sum(v * g.constant(std::move(w)));
  };

  SUBCASE("add/sub/mul/scale") {
    check_gradient(a, [&](Graph& g, Var x) { return readout(g, ad::scale((x + g.constant(b)) * (x - g.constant(b)), 0.7)); });
  }
  SUBCASE("sigmoid") {
    check_gradient(a, [&](Graph& g, Var x) { return readout(g, ad::sigmoid(x)); });
  }
  SUBCASE("softmax_channels and select_channel") {
    check_gradient(tensor_from({2, 3, 2}, oracle::random_flat(12, rng, -3, 3)), [&](Graph& g, Var x) {
      return readout(g, ad::select_channel(ad::softmax_channels(x), 0)) +
             readout(g, ad::select_channel(ad::softmax_channels(x), 1));
    });
  }
  SUBCASE("concat_channels") {
    check_gradient(a, [&](Graph& g, Var x) {
      return ad::sum(ad::sigmoid(ad::concat_channels(x, g.constant(b))) * g.constant(TensorD::constant({4, 3, 4}, 0.3)));
    });
  }
  SUBCASE("conv2d input, kernel and bias (both layouts)") {
    for (auto [c_in, c_out, k] : {std::tuple{2, 3, 6}, std::tuple{4, 2, 3}, std::tuple{3, 3, 4}}) {
      const TensorD in = tensor_from({c_in, 5, 6}, oracle::random_flat(static_cast<std::size_t>(c_in * 30), rng));
      const TensorD ker = tensor_from({c_out, c_in, k, k}, oracle::random_flat(static_cast<std::size_t>(c_out * c_in * k * k), rng));
      const TensorD bias = tensor_from({c_out}, oracle::random_flat(static_cast<std::size_t>(c_out), rng));
      const TensorD mask = tensor_from({c_out, 5, 6}, oracle::random_flat(static_cast<std::size_t>(c_out * 30), rng));
      auto loss = [&](Graph& g, Var i, Var kk, Var bb) { return ad::sum(ad::conv2d(i, kk, bb) * g.constant(mask)); };
      check_gradient(in, [&](Graph& g, Var x) { return loss(g, x, g.constant(ker), g.constant(bias)); });
      check_gradient(ker, [&](Graph& g, Var x) { return loss(g, g.constant(in), x, g.constant(bias)); });
      check_gradient(bias, [&](Graph& g, Var x) { return loss(g, g.constant(in), g.constant(ker), x); });
    }
  }
  SUBCASE("channel_matmul and add_channel_bias") {
    const TensorD w = tensor_from({3, 2}, oracle::random_flat(6, rng));
    const TensorD bias = tensor_from({3}, oracle::random_flat(3, rng));
    const TensorD mask = tensor_from({3, 3, 4}, oracle::random_flat(36, rng));
    check_gradient(w, [&](Graph& g, Var x) {
      return ad::sum(ad::add_channel_bias(ad::channel_matmul(x, g.constant(a)), g.constant(bias)) * g.constant(mask));
    });
    check_gradient(a, [&](Graph& g, Var x) { return ad::sum(ad::channel_matmul(g.constant(w), x) * g.constant(mask)); });
    check_gradient(bias, [&](Graph& g, Var x) {
      return ad::sum(ad::sigmoid(ad::add_channel_bias(ad::channel_matmul(g.constant(w), g.constant(a)), x)));
    });
  }
  SUBCASE("bce_loss") {
    const TensorD p = tensor_from({3, 4}, oracle::random_flat(12, rng, 0.05, 0.95));
    const TensorD y = tensor_from({3, 4}, oracle::random_binary(12, rng, 0.5));
    check_gradient(p, [&](Graph&, Var x) { return ad::bce_loss(x, y); });
  }
}

TEST_CASE("rmsprop_step") {
  SUBCASE("zero gradient is a fixed point and the state decays") {
    TensorD p = TensorD::constant({3}, 1.5);
    std::vector<const TensorD*> view{&p};
    RmsPropState s = RmsPropState::for_params(view);
    s.mean_square[0].setConstant(4.0);
    std::vector<Eigen::ArrayXd> grads{Eigen::ArrayXd::Zero(3)};
    std::vector<TensorD*> params{&p};
    rmsprop_step(params, grads, s, 0.003);
    CHECK((p.values() == 1.5).all());
    CHECK((s.mean_square[0] == 0.9 * 4.0).all());
  }
  SUBCASE("first step closed form") {
    TensorD p = TensorD::constant({1}, 0.25);
    std::vector<const TensorD*> view{&p};
    RmsPropState s = RmsPropState::for_params(view);
    const double g = -0.8, lr = 0.003;
    std::vector<Eigen::ArrayXd> grads{Eigen::ArrayXd::Constant(1, g)};
    std::vector<TensorD*> params{&p};
    rmsprop_step(params, grads, s, lr);
    const double expected = 0.25 - lr * g / (std::sqrt((1.0 - 0.9) * g * g) + 1e-8);
    CHECK(p[0] == doctest::Approx(expected).epsilon(1e-15));
  }
  SUBCASE("descends (w-3)^2 monotonically over every 10-step window") {
    TensorD w = TensorD::constant({1}, 0.0);
    std::vector<const TensorD*> view{&w};
    RmsPropState s = RmsPropState::for_params(view);
    std::vector<TensorD*> params{&w};
    std::vector<double> losses;
    for (int step = 0; step < 100; ++step) {
      losses.push_back((w[0] - 3.0) * (w[0] - 3.0));
      std::vector<Eigen::ArrayXd> grads{Eigen::ArrayXd::Constant(1, 2.0 * (w[0] - 3.0))};
      rmsprop_step(params, grads, s, 0.003);
    }
    for (std::size_t t = 0; t + 10 < losses.size(); ++t) CHECK(losses[t + 10] < losses[t]);
  }
  SUBCASE("NaN gradient aborts without touching parameters") {
    TensorD p = TensorD::constant({2}, 1.0);
    std::vector<const TensorD*> view{&p};
    RmsPropState s = RmsPropState::for_params(view);
    std::vector<Eigen::ArrayXd> grads{Eigen::ArrayXd::Constant(2, std::nan(""))};
    std::vector<TensorD*> params{&p};
    CHECK_THROWS_AS(rmsprop_step(params, grads, s, 0.003), Error);
    CHECK((p.values() == 1.0).all());
    CHECK((s.mean_square[0] == 0.0).all());
  }
}

TEST_CASE("identical inputs give bit-identical outputs") {
  std::mt19937_64 rng(9);
  const TensorD in = tensor_from({2, 9, 9}, oracle::random_flat(162, rng));
  const TensorD ker = tensor_from({4, 2, 6, 6}, oracle::random_flat(288, rng));
  Graph g1, g2;
  CHECK(ad::conv2d(g1.constant(in), g1.constant(ker)).value() == ad::conv2d(g2.constant(in), g2.constant(ker)).value());
}
