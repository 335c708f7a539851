#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "srlora/linalg.hpp"

namespace srlora {

/// Frozen weight plus a trainable rank-r update: y = (w + scale·b·a)·x.
///
/// Slot k is the rank-1 pair (column k of b, row k of a). `slot_direction[k]`
/// names the singular index of the pretrained weight the slot was last
/// initialized from (nullopt for randomly initialized slots).
struct LoraLinear {
  Matrix w;         // m x n, frozen between recompositions
  SvdFactors svd0;  // SVD of the pretrained weight; never mutated
  Matrix b;         // m x r
  Matrix a;         // r x n
  std::size_t rank = 0;
  double alpha = 0.0;
  double scale = 0.0;  // alpha / rank
  std::size_t next_direction = 0;  // first unused singular index
  std::vector<std::optional<std::size_t>> slot_direction;

  std::size_t out_features() const noexcept { return w.rows(); }
  std::size_t in_features() const noexcept { return w.cols(); }
  std::size_t direction_capacity() const noexcept { return svd0.s.size(); }
  std::size_t trainable_parameter_count() const noexcept { return b.size() + a.size(); }

  friend bool operator==(const LoraLinear&, const LoraLinear&) = default;
};

struct LayerGrads {
  Matrix d_b;  // m x r
  Matrix d_a;  // r x n
  Matrix d_x;  // n x batch
};

/// PiSSA initialization: slots take the top-r singular triplets of w0, each
/// factor carrying sqrt(σ_k)·sqrt(rank/alpha) so that scale·b·a equals the
/// rank-r truncation of w0 for any alpha; w keeps the residual.
LoraLinear pissa_init(const Matrix& w0, std::size_t rank, double alpha);

/// Classic LoRA initialization: w = w0, b = 0, a ~ N(0, a_stddev²).
LoraLinear lora_init(const Matrix& w0, std::size_t rank, double alpha, Rng& rng, double a_stddev);

/// w·x + scale·b·(a·x); b·a is never formed.
Matrix forward(const LoraLinear& layer, const Matrix& x);

/// Exact gradients for any scalar loss whose output gradient is d_y.
LayerGrads backward(const LoraLinear& layer, const Matrix& x, const Matrix& d_y);

/// w + scale·b·a, materialized. For tests and reports.
Matrix effective_weight(const LoraLinear& layer);

/// scale · b[:, slots] · a[slots, :]
Matrix slot_product(const LoraLinear& layer, const std::vector<std::size_t>& slots);

/// Writes sqrt(σ_j)·sqrt(rank/alpha)-scaled singular vectors j of svd0 into slot k.
void load_direction(LoraLinear& layer, std::size_t slot, std::size_t direction);

}  // namespace srlora
