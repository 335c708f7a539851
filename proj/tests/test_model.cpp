#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "srlora/error.hpp"
#include "srlora/model.hpp"

using namespace srlora;

namespace {

DenseLayer make_layer(Rng& rng, std::size_t in, std::size_t out, std::size_t r, Activation act) {
  DenseLayer d;
  d.linear = pissa_init(gaussian(rng, out, in, 0.0, 1.0), r, 2.0);
  d.linear.b += gaussian(rng, out, r, 0.0, 0.3);
  d.linear.a += gaussian(rng, r, in, 0.0, 0.3);
  d.bias = gaussian(rng, out, 1, 0.0, 0.5);
  d.activation = act;
  d.importance = ImportanceState::for_layer(d.linear, 0.85, 0.85);
  return d;
}

SrloraNet two_layer(Rng& rng) {
  std::vector<DenseLayer> layers;
  layers.push_back(make_layer(rng, 5, 8, 2, Activation::relu));
  layers.push_back(make_layer(rng, 8, 3, 2, Activation::identity));
  return SrloraNet(std::move(layers));
}

Matrix add_bias(Matrix y, const Matrix& bias) {
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += bias(i, 0);
  return y;
}

}  // namespace

TEST_CASE("net_forward: single identity layer is adapter forward plus bias") {
  Rng rng(1);
  std::vector<DenseLayer> layers{make_layer(rng, 4, 3, 2, Activation::identity)};
  const SrloraNet net(layers);
  const Matrix x = gaussian(rng, 4, 6, 0.0, 1.0);
  CHECK(net_predict(net, x) == add_bias(forward(net.layer(0).linear, x), net.layer(0).bias));
}

TEST_CASE("net_forward: zero input and zero biases give zero pre-activations") {
  Rng rng(2);
  SrloraNet net = two_layer(rng);
  for (std::size_t i = 0; i < net.size(); ++i) net.mutable_layer(i).bias.fill(0.0);
  const auto [out, cache] = net_forward(net, Matrix(5, 3));
  for (const Matrix& z : cache.pre_activations) CHECK(z.frobenius_norm() == 0.0);
  CHECK(out.frobenius_norm() == 0.0);
}

TEST_CASE("net_forward: composition of individual layer calls") {
  Rng rng(3);
  const SrloraNet net = two_layer(rng);
  const Matrix x = gaussian(rng, 5, 7, 0.0, 1.0);
  Matrix h = add_bias(oracle::dense_forward(net.layer(0).linear, x), net.layer(0).bias);
  for (double& v : h.data()) v = std::max(v, 0.0);
  const Matrix y = add_bias(oracle::dense_forward(net.layer(1).linear, h), net.layer(1).bias);
  CHECK(relative_error(net_predict(net, x), y, y) <= 1e-12);
}

TEST_CASE("SrloraNet rejects layers that do not chain") {
  Rng rng(4);
  std::vector<DenseLayer> layers{make_layer(rng, 5, 8, 2, Activation::relu), make_layer(rng, 7, 3, 2, Activation::identity)};
  CHECK_THROWS_AS(SrloraNet{layers}, Error);
}

TEST_CASE("net_backward: zero upstream gradient") {
  Rng rng(5);
  const SrloraNet net = two_layer(rng);
  const auto [out, cache] = net_forward(net, gaussian(rng, 5, 4, 0.0, 1.0));
  const NetGrads g = net_backward(net, cache, Matrix(3, 4));
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(g.layers[i].d_b.frobenius_norm() == 0.0);
    CHECK(g.layers[i].d_a.frobenius_norm() == 0.0);
    CHECK(g.bias[i].frobenius_norm() == 0.0);
  }
}

TEST_CASE("net_backward: one linear layer under mse matches the least-squares gradient") {
  Rng rng(6);
  std::vector<DenseLayer> layers{make_layer(rng, 4, 3, 2, Activation::identity)};
  const SrloraNet net(layers);
  const Matrix x = gaussian(rng, 4, 10, 0.0, 1.0);
  const Matrix y = gaussian(rng, 3, 10, 0.0, 1.0);
  const auto [out, cache] = net_forward(net, x);
  const NetGrads g = net_backward(net, cache, loss_and_grad(LossKind::mse, out, y).second);
  const LoraLinear& l = net.layer(0).linear;
  const Matrix residual = (out - y) * (1.0 / 10.0);
  const Matrix d_weff = oracle::naive_matmul(residual, x.transpose());
  const Matrix d_b = oracle::naive_matmul(d_weff, l.a.transpose()) * l.scale;
  const Matrix d_a = oracle::naive_matmul(l.b.transpose(), d_weff) * l.scale;
  CHECK(relative_error(g.layers[0].d_b, d_b, d_b) <= 1e-12);
  CHECK(relative_error(g.layers[0].d_a, d_a, d_a) <= 1e-12);
  Matrix d_bias(3, 1);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 10; ++j) d_bias(i, 0) += residual(i, j);
  CHECK(relative_error(g.bias[0], d_bias, d_bias) <= 1e-12);
}

TEST_CASE("net_backward: 2-layer relu net against central differences") {
  Rng rng(7);
  for (const LossKind kind : {LossKind::mse, LossKind::softmax_cross_entropy}) {
    const SrloraNet net = two_layer(rng);
    const Matrix x = gaussian(rng, 5, 6, 0.0, 1.0);
    Matrix y(3, 6);
    if (kind == LossKind::mse) y = gaussian(rng, 3, 6, 0.0, 1.0);
    else for (std::size_t j = 0; j < 6; ++j) y(rng.below(3), j) = 1.0;
    const auto [out, cache] = net_forward(net, x);
    const NetGrads g = net_backward(net, cache, loss_and_grad(kind, out, y).second);
    SrloraNet probe = net;
    auto f = [&] { return oracle::net_loss(probe, x, y, kind); };
    for (std::size_t i = 0; i < 2; ++i) {
      DenseLayer& l = probe.mutable_layer(i);
      CHECK(oracle::max_relative_error(oracle::central_difference(l.linear.b, 1e-6, f), g.layers[i].d_b) <= 1e-5);
      CHECK(oracle::max_relative_error(oracle::central_difference(l.linear.a, 1e-6, f), g.layers[i].d_a) <= 1e-5);
      CHECK(oracle::max_relative_error(oracle::central_difference(l.bias, 1e-6, f), g.bias[i]) <= 1e-5);
    }
  }
}

TEST_CASE("net_backward: stale cache and non-adapted layers") {
  Rng rng(8);
  SrloraNet net = two_layer(rng);
  const auto [out, cache] = net_forward(net, gaussian(rng, 5, 4, 0.0, 1.0));
  net.mutable_layer(0).adapted = false;
  CHECK_THROWS_AS(net_backward(net, cache, Matrix(3, 4)), Error);
  const auto [out2, cache2] = net_forward(net, gaussian(rng, 5, 4, 0.0, 1.0));
  const NetGrads g = net_backward(net, cache2, Matrix(3, 4, 1.0));
  CHECK(g.layers[0].d_b.empty());
  CHECK(g.layers[0].d_a.empty());
  CHECK(g.bias[0].rows() == 8);
}

TEST_CASE("trainable_parameter_count") {
  Rng rng(9);
  SrloraNet net = two_layer(rng);
  CHECK(net.trainable_parameter_count() == (8 * 2 + 2 * 5 + 8) + (3 * 2 + 2 * 8 + 3));
  net.mutable_layer(0).adapted = false;
  CHECK(net.trainable_parameter_count() == 8 + (3 * 2 + 2 * 8 + 3));
}

TEST_CASE("loss_and_grad: mse and cross-entropy") {
  Rng rng(10);
  const Matrix y = gaussian(rng, 3, 5, 0.0, 1.0);
  const auto [l0, g0] = loss_and_grad(LossKind::mse, y, y);
  CHECK(l0 == 0.0);
  CHECK(g0.frobenius_norm() == 0.0);

  for (std::size_t k : {2u, 5u, 10u}) {
    Matrix onehot(k, 3);
    for (std::size_t j = 0; j < 3; ++j) onehot(j % k, j) = 1.0;
    CHECK(loss_and_grad(LossKind::softmax_cross_entropy, Matrix(k, 3, 0.7), onehot).first ==
          doctest::Approx(std::log(static_cast<double>(k))).epsilon(1e-14));
  }

  Matrix logits = gaussian(rng, 4, 6, 0.0, 3.0);
  Matrix onehot(4, 6);
  for (std::size_t j = 0; j < 6; ++j) onehot(rng.below(4), j) = 1.0;
  const Matrix analytic = loss_and_grad(LossKind::softmax_cross_entropy, logits, onehot).second;
  const Matrix numeric = oracle::central_difference(
      logits, 1e-6, [&] { return oracle::loss_value(LossKind::softmax_cross_entropy, logits, onehot); });
  CHECK(oracle::max_relative_error(numeric, analytic) <= 1e-6);

  Matrix huge(2, 1);
  huge(0, 0) = 1000.0;
  Matrix target(2, 1);
  target(1, 0) = 1.0;
  const auto [lh, gh] = loss_and_grad(LossKind::softmax_cross_entropy, huge, target);
  CHECK(lh == doctest::Approx(1000.0));
  CHECK(gh.all_finite());

  CHECK_THROWS_AS(loss_and_grad(LossKind::softmax_cross_entropy, Matrix(2, 1), Matrix(2, 1, 0.5)), Error);
  CHECK_THROWS_AS(loss_and_grad(LossKind::mse, Matrix(2, 1), Matrix(3, 1)), Error);
}

TEST_CASE("activation and loss names round-trip") {
  CHECK(parse_activation(to_string(Activation::relu)) == Activation::relu);
  CHECK(parse_loss(to_string(LossKind::softmax_cross_entropy)) == LossKind::softmax_cross_entropy);
  CHECK_THROWS_AS(parse_activation("tanh"), Error);
}
