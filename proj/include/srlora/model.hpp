#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "srlora/adapter.hpp"
#include "srlora/importance.hpp"

namespace srlora {

enum class Activation { relu, identity };
enum class LossKind { mse, softmax_cross_entropy };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);
LossKind parse_loss(const std::string& name);
std::string to_string(LossKind k);

/// One linear layer of the network. Non-adapted layers keep b and a frozen
/// (and zero) and only train their bias.
struct DenseLayer {
  LoraLinear linear;
  Matrix bias;  // out x 1
  Activation activation = Activation::identity;
  bool adapted = true;
  ImportanceState importance;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

class SrloraNet {
 public:
  SrloraNet() = default;
  /// Rejects layer dimensions that do not chain.
  explicit SrloraNet(std::vector<DenseLayer> layers);

  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::size_t size() const noexcept { return layers_.size(); }
  const DenseLayer& layer(std::size_t i) const { return layers_.at(i); }

  /// Mutable access; invalidates outstanding forward caches.
  DenseLayer& mutable_layer(std::size_t i);

  std::size_t revision() const noexcept { return revision_; }
  std::size_t in_features() const;
  std::size_t out_features() const;

  /// b, a of adapted layers plus every bias.
  std::size_t trainable_parameter_count() const;

  /// Parameters only; the revision counter is not compared.
  friend bool operator==(const SrloraNet& x, const SrloraNet& y) { return x.layers_ == y.layers_; }

 private:
  std::vector<DenseLayer> layers_;
  std::size_t revision_ = 0;
};

struct ForwardCache {
  std::vector<Matrix> inputs;           // input to each layer
  std::vector<Matrix> pre_activations;  // each layer's affine output
  const SrloraNet* net = nullptr;
  std::size_t revision = 0;
};

struct NetGrads {
  std::vector<LayerGrads> layers;  // d_b/d_a empty for non-adapted layers
  std::vector<Matrix> bias;
};

/// Columns of x are samples.
std::pair<Matrix, ForwardCache> net_forward(const SrloraNet& net, const Matrix& x);
Matrix net_predict(const SrloraNet& net, const Matrix& x);

/// Rejects a cache produced by another net or before the last mutation.
NetGrads net_backward(const SrloraNet& net, const ForwardCache& cache, const Matrix& d_out);

/// mse: mean over samples of ½‖ŷ − y‖². softmax_cross_entropy: mean
/// −log softmax(ŷ)[true class]; y must hold one-hot columns.
/// Returns the loss and its gradient with respect to y_hat.
std::pair<double, Matrix> loss_and_grad(LossKind kind, const Matrix& y_hat, const Matrix& y);

}  // namespace srlora
