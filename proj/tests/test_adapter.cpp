#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "srlora/adapter.hpp"
#include "srlora/error.hpp"
#include "srlora/recompose.hpp"

using namespace srlora;

TEST_CASE("pissa_init: diagonal case") {
  const LoraLinear l = pissa_init(Matrix{{4, 0}, {0, 1}}, 1, 1.0);
  CHECK(l.scale == 1.0);
  CHECK(l.b(0, 0) == doctest::Approx(2.0));
  CHECK(l.b(1, 0) == doctest::Approx(0.0));
  CHECK(l.a(0, 0) == doctest::Approx(2.0));
  CHECK(l.a(0, 1) == doctest::Approx(0.0));
  CHECK(relative_error(l.w, Matrix{{0, 0}, {0, 1}}, Matrix{{1}}) <= 1e-14);
  CHECK(l.next_direction == 1);
  REQUIRE(l.slot_direction.size() == 1);
  CHECK(l.slot_direction[0] == 0u);
}

TEST_CASE("pissa_init: full rank leaves a zero residual") {
  Rng rng(1);
  const Matrix w0 = gaussian(rng, 5, 4, 0.0, 1.0);
  const LoraLinear l = pissa_init(w0, 4, 2.0);
  CHECK(l.w.frobenius_norm() <= 1e-8);
}

TEST_CASE("pissa_init: seeded 8x6 reconstruction") {
  Rng rng(2);
  const Matrix w0 = gaussian(rng, 8, 6, 0.0, 1.0);
  const LoraLinear l = pissa_init(w0, 4, 4.0);
  const Matrix rebuilt = l.w + l.scale * oracle::naive_matmul(l.b, l.a);
  CHECK(relative_error(rebuilt, w0, w0) <= 1e-8);
  CHECK(relative_error(effective_weight(l), w0, w0) <= 1e-8);
}

TEST_CASE("pissa_init: rank out of range is rejected") {
  CHECK_THROWS_AS(pissa_init(Matrix(3, 2, 1.0), 3, 1.0), Error);
  CHECK_THROWS_AS(pissa_init(Matrix(3, 2, 1.0), 0, 1.0), Error);
  CHECK_THROWS_AS(pissa_init(Matrix(3, 2, 1.0), 1, 0.0), Error);
}

TEST_CASE("lora_init: frozen weight is w0 and b starts at zero") {
  Rng rng(3);
  const Matrix w0 = gaussian(rng, 6, 5, 0.0, 1.0);
  const LoraLinear l = lora_init(w0, 2, 2.0, rng, 0.1);
  CHECK(l.w == w0);
  CHECK(l.b.frobenius_norm() == 0.0);
  CHECK(l.a.frobenius_norm() > 0.0);
  CHECK(effective_weight(l) == w0);
  CHECK(l.trainable_parameter_count() == 2 * 6 + 2 * 5);
}

TEST_CASE("forward: trivial cases") {
  Rng rng(4);
  LoraLinear l = pissa_init(gaussian(rng, 4, 3, 0.0, 1.0), 2, 2.0);
  const Matrix x = gaussian(rng, 3, 5, 0.0, 1.0);

  LoraLinear zero_b = l;
  zero_b.b.fill(0.0);
  CHECK(forward(zero_b, x) == matmul(l.w, x));
  LoraLinear zero_a = l;
  zero_a.a.fill(0.0);
  CHECK(forward(zero_a, x) == matmul(l.w, x));

  CHECK(forward(l, Matrix(3, 5)).frobenius_norm() == 0.0);
  CHECK_THROWS_AS(forward(l, Matrix(4, 5)), Error);
}

TEST_CASE("forward: dense materialization oracle") {
  Rng rng(5);
  LoraLinear l = pissa_init(gaussian(rng, 7, 9, 0.0, 1.0), 3, 6.0);
  l.b += gaussian(rng, 7, 3, 0.0, 0.5);
  l.a += gaussian(rng, 3, 9, 0.0, 0.5);
  const Matrix x = gaussian(rng, 9, 4, 0.0, 1.0);
  const Matrix ref = oracle::dense_forward(l, x);
  CHECK(relative_error(forward(l, x), ref, ref) <= 1e-10);
}

TEST_CASE("backward: zero upstream gives zero grads") {
  Rng rng(6);
  const LoraLinear l = pissa_init(gaussian(rng, 4, 3, 0.0, 1.0), 2, 2.0);
  const LayerGrads g = backward(l, gaussian(rng, 3, 5, 0.0, 1.0), Matrix(4, 5));
  CHECK(g.d_b.frobenius_norm() == 0.0);
  CHECK(g.d_a.frobenius_norm() == 0.0);
  CHECK(g.d_x.frobenius_norm() == 0.0);
}

TEST_CASE("backward: scalar chain rule") {
  LoraLinear l = pissa_init(Matrix{{3.0}}, 1, 2.0);
  l.b = Matrix{{0.7}};
  l.a = Matrix{{-1.3}};
  const double x = 0.4, dy = 1.9, s = l.scale;
  const LayerGrads g = backward(l, Matrix{{x}}, Matrix{{dy}});
  CHECK(g.d_b(0, 0) == doctest::Approx(s * dy * -1.3 * x));
  CHECK(g.d_a(0, 0) == doctest::Approx(s * 0.7 * dy * x));
  CHECK(g.d_x(0, 0) == doctest::Approx((l.w(0, 0) + s * 0.7 * -1.3) * dy));
}

TEST_CASE("backward: central differences over 20+ seeded configurations") {
  Rng rng(7);
  for (int t = 0; t < 22; ++t) {
    const std::size_t m = 2 + rng.below(10), n = 2 + rng.below(10);
    const std::size_t r = 1 + rng.below(std::min<std::size_t>(std::min(m, n), 4));
    LoraLinear l = pissa_init(gaussian(rng, m, n, 0.0, 1.0), r, 1.0 + 3.0 * rng.uniform());
    l.b += gaussian(rng, m, r, 0.0, 0.3);
    l.a += gaussian(rng, r, n, 0.0, 0.3);
    Matrix x = gaussian(rng, n, 3, 0.0, 1.0);
    const Matrix g = gaussian(rng, m, 3, 0.0, 1.0);
    const LayerGrads an = backward(l, x, g);
    auto f = [&] { return oracle::linear_probe_loss(l, x, g); };
    CHECK(oracle::max_relative_error(oracle::central_difference(l.b, 1e-6, f), an.d_b) <= 1e-5);
    CHECK(oracle::max_relative_error(oracle::central_difference(l.a, 1e-6, f), an.d_a) <= 1e-5);
    CHECK(oracle::max_relative_error(oracle::central_difference(x, 1e-6, f), an.d_x) <= 1e-5);
  }
}

TEST_CASE("effective_weight: zero adapters and post-recomposition identity") {
  Rng rng(8);
  const Matrix w0 = gaussian(rng, 6, 6, 0.0, 1.0);
  LoraLinear l = pissa_init(w0, 2, 2.0);
  LoraLinear z = l;
  z.b.fill(0.0);
  CHECK(effective_weight(z) == z.w);

  fuse_slots(l, {0});
  REQUIRE(reinit_slots(l, {0}));
  fuse_slots(l, {0, 1});
  REQUIRE(reinit_slots(l, {0, 1}));
  CHECK(relative_error(effective_weight(l), w0, w0) <= 1e-6);
}

TEST_CASE("slot_product and load_direction") {
  Rng rng(9);
  const Matrix w0 = gaussian(rng, 5, 4, 0.0, 1.0);
  LoraLinear l = pissa_init(w0, 3, 3.0);
  const Matrix all = slot_product(l, {0, 1, 2});
  CHECK(relative_error(all, l.scale * matmul(l.b, l.a), all) <= 1e-14);
  CHECK(slot_product(l, {}).frobenius_norm() == 0.0);

  Matrix expected(5, 4);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j) expected(i, j) = l.svd0.s[3] * l.svd0.u(i, 3) * l.svd0.v(j, 3);
  load_direction(l, 1, 3);
  CHECK(l.slot_direction[1] == 3u);
  const Matrix got = slot_product(l, {1});
  CHECK(relative_error(got, expected, expected) <= 1e-12);
  CHECK_THROWS_AS(load_direction(l, 1, 4), Error);
}
