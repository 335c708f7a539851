#include "srlora/importance.hpp"

#include <cmath>
#include <string>

#include "srlora/error.hpp"

namespace srlora {

ImportanceState ImportanceState::for_layer(const LoraLinear& layer, double beta1, double beta2) {
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    fail_validation("importance: beta1 and beta2 must lie in (0, 1)");
  }
  ImportanceState s;
  s.i_bar_b = Matrix(layer.b.rows(), layer.b.cols());
  s.u_bar_b = s.i_bar_b;
  s.i_bar_a = Matrix(layer.a.rows(), layer.a.cols());
  s.u_bar_a = s.i_bar_a;
  s.beta1 = beta1;
  s.beta2 = beta2;
  return s;
}

Matrix sensitivity(const Matrix& w, const Matrix& g) {
  require_same_shape(w, g, "sensitivity");
  Matrix out = w;
  auto o = out.data();
  auto gd = g.data();
  for (std::size_t k = 0; k < o.size(); ++k) o[k] = std::fabs(o[k] * gd[k]);
  return out;
}

namespace {

void smooth(Matrix& i_bar, Matrix& u_bar, const Matrix& instant, double beta1, double beta2) {
  auto ib = i_bar.data();
  auto ub = u_bar.data();
  auto in = instant.data();
  for (std::size_t k = 0; k < ib.size(); ++k) {
    ib[k] = beta1 * ib[k] + (1.0 - beta1) * in[k];
    ub[k] = beta2 * ub[k] + (1.0 - beta2) * std::fabs(in[k] - ib[k]);
  }
}

}  // namespace

void ema_update(ImportanceState& state, const LayerGrads& grads, const LoraLinear& layer) {
  require_same_shape(state.i_bar_b, layer.b, "ema_update (b state)");
  require_same_shape(state.i_bar_a, layer.a, "ema_update (a state)");
  const Matrix inst_b = sensitivity(layer.b, grads.d_b);
  const Matrix inst_a = sensitivity(layer.a, grads.d_a);
  smooth(state.i_bar_b, state.u_bar_b, inst_b, state.beta1, state.beta2);
  smooth(state.i_bar_a, state.u_bar_a, inst_a, state.beta1, state.beta2);
  ++state.step;
}

std::pair<Matrix, Matrix> param_score(const ImportanceState& state) {
  return {hadamard(state.i_bar_b, state.u_bar_b), hadamard(state.i_bar_a, state.u_bar_a)};
}

std::vector<double> slot_scores(const ImportanceState& state) {
  const auto [sb, sa] = param_score(state);
  const std::size_t r = sb.cols();
  if (sa.rows() != r) fail_validation("slot_scores: b and a states disagree on rank");
  std::vector<double> scores(r, 0.0);
  for (std::size_t k = 0; k < r; ++k) {
    double col = 0.0;
    for (std::size_t i = 0; i < sb.rows(); ++i) col += sb(i, k);
    double row = 0.0;
    for (std::size_t j = 0; j < sa.cols(); ++j) row += sa(k, j);
    scores[k] = col / static_cast<double>(sb.rows()) + row / static_cast<double>(sa.cols());
  }
  return scores;
}

void reset_slots(ImportanceState& state, const std::vector<std::size_t>& slots) {
  const std::size_t r = state.i_bar_b.cols();
  for (std::size_t k : slots) {
    if (k >= r) {
      fail_validation("reset_slots: slot " + std::to_string(k) + " out of range for rank " +
                      std::to_string(r));
    }
  }
  for (std::size_t k : slots) {
    for (std::size_t i = 0; i < state.i_bar_b.rows(); ++i) {
      state.i_bar_b(i, k) = 0.0;
      state.u_bar_b(i, k) = 0.0;
    }
    for (std::size_t j = 0; j < state.i_bar_a.cols(); ++j) {
      state.i_bar_a(k, j) = 0.0;
      state.u_bar_a(k, j) = 0.0;
    }
  }
}

}  // namespace srlora
