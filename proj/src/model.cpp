#include "srlora/model.hpp"

#include <algorithm>
#include <cmath>

#include "srlora/error.hpp"

namespace srlora {

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "identity") return Activation::identity;
  fail_validation("unknown activation '" + name + "' (expected relu|identity)");
}

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

LossKind parse_loss(const std::string& name) {
  if (name == "mse") return LossKind::mse;
  if (name == "softmax_cross_entropy") return LossKind::softmax_cross_entropy;
  fail_validation("unknown loss '" + name + "' (expected mse|softmax_cross_entropy)");
}

std::string to_string(LossKind k) { return k == LossKind::mse ? "mse" : "softmax_cross_entropy"; }

SrloraNet::SrloraNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) fail_validation("network needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const DenseLayer& l = layers_[i];
    if (l.bias.rows() != l.linear.out_features() || l.bias.cols() != 1) {
      fail_validation("layer " + std::to_string(i) + ": bias " + l.bias.shape_string() +
                      " does not match output width " + std::to_string(l.linear.out_features()));
    }
    if (i > 0 && layers_[i - 1].linear.out_features() != l.linear.in_features()) {
      fail_validation("layer " + std::to_string(i) + ": input width " +
                      std::to_string(l.linear.in_features()) + " does not chain with previous output " +
                      std::to_string(layers_[i - 1].linear.out_features()));
    }
  }
}

DenseLayer& SrloraNet::mutable_layer(std::size_t i) {
  ++revision_;
  return layers_.at(i);
}

std::size_t SrloraNet::in_features() const { return layers_.front().linear.in_features(); }
std::size_t SrloraNet::out_features() const { return layers_.back().linear.out_features(); }

std::size_t SrloraNet::trainable_parameter_count() const {
  std::size_t n = 0;
  for (const DenseLayer& l : layers_) {
    if (l.adapted) n += l.linear.trainable_parameter_count();
    n += l.bias.size();
  }
  return n;
}

namespace {

void add_bias(Matrix& z, const Matrix& bias) {
  for (std::size_t i = 0; i < z.rows(); ++i)
    for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) += bias(i, 0);
}

Matrix activate(const Matrix& z, Activation act) {
  if (act == Activation::identity) return z;
  Matrix out = z;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

}  // namespace

std::pair<Matrix, ForwardCache> net_forward(const SrloraNet& net, const Matrix& x) {
  if (net.size() == 0) fail_validation("net_forward: empty network");
  if (x.empty() || x.rows() != net.in_features()) {
    fail_validation("net_forward: input " + x.shape_string() + " but network expects " +
                    std::to_string(net.in_features()) + " features");
  }
  ForwardCache cache;
  cache.net = &net;
  cache.revision = net.revision();
  Matrix h = x;
  for (const DenseLayer& l : net.layers()) {
    Matrix z = forward(l.linear, h);
    add_bias(z, l.bias);
    Matrix next = activate(z, l.activation);
    cache.inputs.push_back(std::move(h));
    cache.pre_activations.push_back(std::move(z));
    h = std::move(next);
  }
  return {std::move(h), std::move(cache)};
}

Matrix net_predict(const SrloraNet& net, const Matrix& x) { return net_forward(net, x).first; }

NetGrads net_backward(const SrloraNet& net, const ForwardCache& cache, const Matrix& d_out) {
  if (cache.net != &net || cache.revision != net.revision() || cache.inputs.size() != net.size()) {
    fail_validation("net_backward: stale forward cache");
  }
  const Matrix& last = cache.pre_activations.back();
  if (d_out.rows() != last.rows() || d_out.cols() != last.cols()) {
    fail_validation("net_backward: output gradient " + d_out.shape_string() + " vs output " +
                    last.shape_string());
  }
  NetGrads grads;
  grads.layers.resize(net.size());
  grads.bias.resize(net.size());
  Matrix upstream = d_out;
  for (std::size_t li = net.size(); li-- > 0;) {
    const DenseLayer& l = net.layer(li);
    Matrix d_z = upstream;
    if (l.activation == Activation::relu) {
      const Matrix& z = cache.pre_activations[li];
      for (std::size_t k = 0; k < d_z.size(); ++k)
        if (!(z.data()[k] > 0.0)) d_z.data()[k] = 0.0;
    }
    Matrix d_bias(d_z.rows(), 1);
    for (std::size_t i = 0; i < d_z.rows(); ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d_z.cols(); ++j) acc += d_z(i, j);
      d_bias(i, 0) = acc;
    }
    LayerGrads g = backward(l.linear, cache.inputs[li], d_z);
    if (!l.adapted) {
      g.d_b = Matrix();
      g.d_a = Matrix();
    }
    upstream = g.d_x;
    grads.layers[li] = std::move(g);
    grads.bias[li] = std::move(d_bias);
  }
  return grads;
}

std::pair<double, Matrix> loss_and_grad(LossKind kind, const Matrix& y_hat, const Matrix& y) {
  require_same_shape(y_hat, y, "loss_and_grad");
  const double batch = static_cast<double>(y.cols());
  Matrix grad(y.rows(), y.cols());
  double loss = 0.0;

  if (kind == LossKind::mse) {
    for (std::size_t k = 0; k < y.size(); ++k) {
      const double diff = y_hat.data()[k] - y.data()[k];
      loss += 0.5 * diff * diff;
      grad.data()[k] = diff / batch;
    }
    return {loss / batch, std::move(grad)};
  }

  for (std::size_t j = 0; j < y.cols(); ++j) {
    std::size_t label = y.rows();
    for (std::size_t i = 0; i < y.rows(); ++i) {
      const double t = y(i, j);
      if (t == 1.0 && label == y.rows()) {
        label = i;
      } else if (t != 0.0) {
        label = y.rows() + 1;
        break;
      }
    }
    if (label >= y.rows()) fail_validation("cross-entropy: column " + std::to_string(j) + " is not one-hot");

    double peak = y_hat(0, j);
    for (std::size_t i = 1; i < y.rows(); ++i) peak = std::max(peak, y_hat(i, j));
    double denom = 0.0;
    for (std::size_t i = 0; i < y.rows(); ++i) denom += std::exp(y_hat(i, j) - peak);
    const double log_denom = std::log(denom);
    loss += -(y_hat(label, j) - peak - log_denom);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      const double p = std::exp(y_hat(i, j) - peak - log_denom);
      grad(i, j) = (p - y(i, j)) / batch;
    }
  }
  return {loss / batch, std::move(grad)};
}

}  // namespace srlora
