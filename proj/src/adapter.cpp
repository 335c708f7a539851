#include "srlora/adapter.hpp"

#include <cmath>
#include <string>

#include "srlora/error.hpp"

namespace srlora {

namespace {

LoraLinear make_shell(const Matrix& w0, std::size_t rank, double alpha) {
  if (w0.empty()) fail_validation("adapter: empty pretrained weight");
  const std::size_t d = std::min(w0.rows(), w0.cols());
  if (rank < 1 || rank > d) {
    fail_validation("adapter: rank " + std::to_string(rank) + " outside [1, min(m, n)=" +
                    std::to_string(d) + "] for " + w0.shape_string());
  }
  if (!(alpha > 0.0)) fail_validation("adapter: alpha must be positive");

  LoraLinear layer;
  layer.svd0 = svd(w0);
  layer.b = Matrix(w0.rows(), rank);
  layer.a = Matrix(rank, w0.cols());
  layer.rank = rank;
  layer.alpha = alpha;
  layer.scale = alpha / static_cast<double>(rank);
  layer.slot_direction.assign(rank, std::nullopt);
  return layer;
}

void check_input(const LoraLinear& layer, const Matrix& x, const char* context) {
  if (x.empty() || x.rows() != layer.in_features()) {
    fail_validation(std::string(context) + ": input " + x.shape_string() + " incompatible with layer " +
                    layer.w.shape_string());
  }
}

}  // namespace

void load_direction(LoraLinear& layer, std::size_t slot, std::size_t direction) {
  if (slot >= layer.rank || direction >= layer.direction_capacity()) {
    fail_validation("load_direction: slot " + std::to_string(slot) + " / direction " + std::to_string(direction) +
                    " out of range (rank " + std::to_string(layer.rank) + ", " +
                    std::to_string(layer.direction_capacity()) + " directions)");
  }
  const double fold = std::sqrt(static_cast<double>(layer.rank) / layer.alpha);
  const double root = std::sqrt(layer.svd0.s[direction]) * fold;
  for (std::size_t i = 0; i < layer.b.rows(); ++i) layer.b(i, slot) = layer.svd0.u(i, direction) * root;
  for (std::size_t j = 0; j < layer.a.cols(); ++j) layer.a(slot, j) = root * layer.svd0.v(j, direction);
  layer.slot_direction[slot] = direction;
}

LoraLinear pissa_init(const Matrix& w0, std::size_t rank, double alpha) {
  LoraLinear layer = make_shell(w0, rank, alpha);
  for (std::size_t k = 0; k < rank; ++k) load_direction(layer, k, k);
  layer.next_direction = rank;
  layer.w = w0 - layer.scale * matmul(layer.b, layer.a);
  return layer;
}

LoraLinear lora_init(const Matrix& w0, std::size_t rank, double alpha, Rng& rng, double a_stddev) {
  LoraLinear layer = make_shell(w0, rank, alpha);
  layer.a = gaussian(rng, rank, w0.cols(), 0.0, a_stddev);
  layer.w = w0;
  return layer;
}

Matrix forward(const LoraLinear& layer, const Matrix& x) {
  check_input(layer, x, "forward");
  Matrix y = matmul(layer.w, x);
  y += layer.scale * matmul(layer.b, matmul(layer.a, x));
  return y;
}

LayerGrads backward(const LoraLinear& layer, const Matrix& x, const Matrix& d_y) {
  check_input(layer, x, "backward");
  if (d_y.rows() != layer.out_features() || d_y.cols() != x.cols()) {
    fail_validation("backward: output gradient " + d_y.shape_string() + " does not match output " +
                    std::to_string(layer.out_features()) + "x" + std::to_string(x.cols()));
  }
  const Matrix ax = matmul(layer.a, x);         // r x batch
  const Matrix bt_dy = matmul_tn(layer.b, d_y);  // r x batch

  LayerGrads g;
  g.d_b = layer.scale * matmul_nt(d_y, ax);
  g.d_a = layer.scale * matmul_nt(bt_dy, x);
  g.d_x = matmul_tn(layer.w, d_y);
  g.d_x += layer.scale * matmul_tn(layer.a, bt_dy);
  return g;
}

Matrix effective_weight(const LoraLinear& layer) {
  return layer.w + layer.scale * matmul(layer.b, layer.a);
}

Matrix slot_product(const LoraLinear& layer, const std::vector<std::size_t>& slots) {
  Matrix out(layer.out_features(), layer.in_features());
  for (std::size_t k : slots) {
    for (std::size_t i = 0; i < out.rows(); ++i) {
      const double bik = layer.scale * layer.b(i, k);
      for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bik * layer.a(k, j);
    }
  }
  return out;
}

}  // namespace srlora
