#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "srlora/error.hpp"
#include "srlora/importance.hpp"

using namespace srlora;

namespace {

LoraLinear layer_with(const Matrix& b, const Matrix& a) {
  LoraLinear l;
  l.w = Matrix(b.rows(), a.cols());
  l.rank = b.cols();
  l.alpha = 1.0;
  l.scale = 1.0 / static_cast<double>(l.rank);
  l.b = b;
  l.a = a;
  return l;
}

LayerGrads grads_with(const Matrix& d_b, const Matrix& d_a) {
  LayerGrads g;
  g.d_b = d_b;
  g.d_a = d_a;
  return g;
}

ImportanceState random_state(Rng& rng, std::size_t m, std::size_t r, std::size_t n) {
  ImportanceState s;
  s.i_bar_b = abs(gaussian(rng, m, r, 0.0, 1.0));
  s.u_bar_b = abs(gaussian(rng, m, r, 0.0, 1.0));
  s.i_bar_a = abs(gaussian(rng, r, n, 0.0, 1.0));
  s.u_bar_a = abs(gaussian(rng, r, n, 0.0, 1.0));
  s.step = 17;
  return s;
}

}  // namespace

TEST_CASE("sensitivity") {
  CHECK(sensitivity(Matrix{{2}}, Matrix{{-3}}) == Matrix{{6}});
  Rng rng(1);
  const Matrix w = gaussian(rng, 4, 5, 0.0, 1.0);
  CHECK(sensitivity(w, Matrix(4, 5)).frobenius_norm() == 0.0);
  const Matrix g = gaussian(rng, 4, 5, 0.0, 1.0);
  const Matrix s = sensitivity(w, g);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j) CHECK(s(i, j) == std::fabs(w(i, j) * g(i, j)));
  CHECK_THROWS_AS(sensitivity(w, Matrix(5, 4)), Error);
}

TEST_CASE("ema_update: first step from zero") {
  const LoraLinear l = layer_with(Matrix{{1.0}}, Matrix{{1.0}});
  ImportanceState s = ImportanceState::for_layer(l, 0.85, 0.85);
  ema_update(s, grads_with(Matrix{{1.0}}, Matrix{{1.0}}), l);
  CHECK(s.i_bar_b(0, 0) == doctest::Approx(0.15).epsilon(1e-15));
  CHECK(s.step == 1);
}

TEST_CASE("ema_update: constant input follows the geometric series") {
  const double c = 2.5, beta1 = 0.85;
  const LoraLinear l = layer_with(Matrix{{1.0}}, Matrix{{1.0}});
  ImportanceState s = ImportanceState::for_layer(l, beta1, 0.85);
  for (int t = 1; t <= 12; ++t) {
    ema_update(s, grads_with(Matrix{{c}}, Matrix{{c}}), l);
    CHECK(s.i_bar_b(0, 0) == doctest::Approx(c * (1.0 - std::pow(beta1, t))).epsilon(1e-13));
  }
}

TEST_CASE("ema_update: random sequence matches the scalar recurrence") {
  Rng rng(2);
  const LoraLinear l = layer_with(gaussian(rng, 3, 2, 0.0, 1.0), gaussian(rng, 2, 3, 0.0, 1.0));
  ImportanceState s = ImportanceState::for_layer(l, 0.8, 0.7);
  std::vector<LayerGrads> seq;
  for (int t = 0; t < 10; ++t) seq.push_back(grads_with(gaussian(rng, 3, 2, 0.0, 1.0), gaussian(rng, 2, 3, 0.0, 1.0)));
  for (const auto& g : seq) ema_update(s, g, l);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < 2; ++k) {
      std::vector<double> inst;
      for (const auto& g : seq) inst.push_back(std::fabs(l.b(i, k) * g.d_b(i, k)));
      const auto [ib, ub] = oracle::scalar_ema(inst, 0.8, 0.7);
      CHECK(s.i_bar_b(i, k) == doctest::Approx(ib).epsilon(1e-13));
      CHECK(s.u_bar_b(i, k) == doctest::Approx(ub).epsilon(1e-13));
    }
  }
}

TEST_CASE("ema_update: permutation equivariance and scale covariance of the smoothed sensitivity") {
  Rng rng(3);
  const LoraLinear l = layer_with(gaussian(rng, 2, 3, 0.0, 1.0), gaussian(rng, 3, 2, 0.0, 1.0));
  LoraLinear perm = l;
  const std::size_t p[3] = {2, 0, 1};
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t i = 0; i < 2; ++i) perm.b(i, k) = l.b(i, p[k]);
    for (std::size_t j = 0; j < 2; ++j) perm.a(k, j) = l.a(p[k], j);
  }
  ImportanceState s = ImportanceState::for_layer(l, 0.85, 0.85);
  ImportanceState sp = s;
  ImportanceState scaled = s;
  for (int t = 0; t < 5; ++t) {
    const LayerGrads g = grads_with(gaussian(rng, 2, 3, 0.0, 1.0), gaussian(rng, 3, 2, 0.0, 1.0));
    LayerGrads gp = g;
    for (std::size_t k = 0; k < 3; ++k) {
      for (std::size_t i = 0; i < 2; ++i) gp.d_b(i, k) = g.d_b(i, p[k]);
      for (std::size_t j = 0; j < 2; ++j) gp.d_a(k, j) = g.d_a(p[k], j);
    }
    ema_update(s, g, l);
    ema_update(sp, gp, perm);
    ema_update(scaled, grads_with(g.d_b * 4.0, g.d_a * 4.0), l);
  }
  const auto sc = slot_scores(s);
  const auto sc_p = slot_scores(sp);
  const auto sc_s = slot_scores(scaled);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(sc_p[k] == doctest::Approx(sc[p[k]]).epsilon(1e-14));
    CHECK(sc_s[k] == doctest::Approx(16.0 * sc[k]).epsilon(1e-12));
  }
}

TEST_CASE("param_score") {
  Rng rng(4);
  ImportanceState s = random_state(rng, 3, 2, 4);
  s.u_bar_b.fill(0.0);
  s.u_bar_a.fill(0.0);
  auto [sb, sa] = param_score(s);
  CHECK(sb.frobenius_norm() == 0.0);
  CHECK(sa.frobenius_norm() == 0.0);

  s.i_bar_b.fill(1.0);
  s.u_bar_b.fill(1.0);
  CHECK(param_score(s).first == Matrix(3, 2, 1.0));

  const ImportanceState r = random_state(rng, 3, 2, 4);
  const auto [rb, ra] = param_score(r);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 2; ++k) CHECK(rb(i, k) == r.i_bar_b(i, k) * r.u_bar_b(i, k));
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t j = 0; j < 4; ++j) CHECK(ra(k, j) == r.i_bar_a(k, j) * r.u_bar_a(k, j));
}

TEST_CASE("slot_scores") {
  ImportanceState one;
  one.i_bar_b = Matrix{{2.0}};
  one.u_bar_b = Matrix{{3.0}};
  one.i_bar_a = Matrix{{5.0}};
  one.u_bar_a = Matrix{{0.5}};
  CHECK(slot_scores(one) == std::vector<double>{6.0 + 2.5});

  ImportanceState flat;
  flat.i_bar_b = Matrix(4, 3, 1.0);
  flat.u_bar_b = Matrix(4, 3, 1.5);
  flat.i_bar_a = Matrix(3, 5, 1.0);
  flat.u_bar_a = Matrix(3, 5, 1.5);
  for (double v : slot_scores(flat)) CHECK(v == doctest::Approx(3.0));

  Rng rng(5);
  const ImportanceState r = random_state(rng, 6, 4, 7);
  const auto scores = slot_scores(r);
  REQUIRE(scores.size() == 4);
  for (std::size_t k = 0; k < 4; ++k) {
    long double col = 0, row = 0;
    for (std::size_t i = 0; i < 6; ++i) col += static_cast<long double>(r.i_bar_b(i, k)) * r.u_bar_b(i, k);
    for (std::size_t j = 0; j < 7; ++j) row += static_cast<long double>(r.i_bar_a(k, j)) * r.u_bar_a(k, j);
    CHECK(scores[k] == doctest::Approx(static_cast<double>(col / 6 + row / 7)).epsilon(1e-14));
  }
}

TEST_CASE("reset_slots") {
  Rng rng(6);
  const ImportanceState base = random_state(rng, 5, 3, 4);

  ImportanceState all = base;
  reset_slots(all, {0, 1, 2});
  ImportanceState fresh;
  fresh.i_bar_b = Matrix(5, 3);
  fresh.u_bar_b = Matrix(5, 3);
  fresh.i_bar_a = Matrix(3, 4);
  fresh.u_bar_a = Matrix(3, 4);
  fresh.step = base.step;
  CHECK(all == fresh);

  ImportanceState none = base;
  reset_slots(none, {});
  CHECK(none == base);

  ImportanceState zero = base;
  reset_slots(zero, {0});
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(zero.i_bar_b(i, 0) == 0.0);
    CHECK(zero.u_bar_b(i, 0) == 0.0);
    for (std::size_t k = 1; k < 3; ++k) {
      CHECK(zero.i_bar_b(i, k) == base.i_bar_b(i, k));
      CHECK(zero.u_bar_b(i, k) == base.u_bar_b(i, k));
    }
  }
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(zero.i_bar_a(0, j) == 0.0);
    CHECK(zero.u_bar_a(0, j) == 0.0);
    for (std::size_t k = 1; k < 3; ++k) CHECK(zero.i_bar_a(k, j) == base.i_bar_a(k, j));
  }
  CHECK_THROWS_AS(reset_slots(zero, {3}), Error);
}

TEST_CASE("for_layer rejects betas outside (0, 1)") {
  const LoraLinear l = layer_with(Matrix{{1.0}}, Matrix{{1.0}});
  CHECK_THROWS_AS(ImportanceState::for_layer(l, 1.0, 0.5), Error);
  CHECK_THROWS_AS(ImportanceState::for_layer(l, 0.5, 0.0), Error);
}
