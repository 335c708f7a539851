#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "srlora/adapter.hpp"

namespace srlora {

/// Smoothed sensitivity (Ī) and uncertainty (Ū) for every entry of b and a.
struct ImportanceState {
  Matrix i_bar_b, u_bar_b;  // m x r
  Matrix i_bar_a, u_bar_a;  // r x n
  double beta1 = 0.85;
  double beta2 = 0.85;
  std::size_t step = 0;

  /// Zero state shaped after layer's adapter.
  static ImportanceState for_layer(const LoraLinear& layer, double beta1, double beta2);

  friend bool operator==(const ImportanceState&, const ImportanceState&) = default;
};

/// |w ⊙ g|, the first-order estimate of the loss change from zeroing each entry.
Matrix sensitivity(const Matrix& w, const Matrix& g);

/// One EMA step from this step's gradients, taken before the optimizer
/// moves b and a. Ū tracks |I − Ī| against the freshly updated Ī.
void ema_update(ImportanceState& state, const LayerGrads& grads, const LoraLinear& layer);

/// Ī ⊙ Ū for b and a.
std::pair<Matrix, Matrix> param_score(const ImportanceState& state);

/// Per-slot score: mean of column k of b's scores + mean of row k of a's.
std::vector<double> slot_scores(const ImportanceState& state);

/// Zero Ī and Ū for the given slots; `step` is left alone.
void reset_slots(ImportanceState& state, const std::vector<std::size_t>& slots);

}  // namespace srlora
