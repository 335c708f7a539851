#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <Eigen/Dense>

namespace srlora::oracle {

namespace {

using LMat = std::vector<std::vector<long double>>;

LMat to_long(const Matrix& m) {
  LMat out(m.rows(), std::vector<long double>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  return out;
}

LMat mul(const LMat& a, const LMat& b) {
  LMat c(a.size(), std::vector<long double>(b.front().size(), 0.0L));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.front().size(); ++j) {
      long double acc = 0.0L;
      for (std::size_t k = 0; k < b.size(); ++k) acc += a[i][k] * b[k][j];
      c[i][j] = acc;
    }
  return c;
}

LMat dense_effective(const LoraLinear& layer) {
  LMat w = to_long(layer.w);
  const LMat ba = mul(to_long(layer.b), to_long(layer.a));
  const long double s = layer.scale;
  for (std::size_t i = 0; i < w.size(); ++i)
    for (std::size_t j = 0; j < w[i].size(); ++j) w[i][j] += s * ba[i][j];
  return w;
}

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  return e;
}

long double loss_long(LossKind kind, const LMat& y_hat, const Matrix& y) {
  const long double batch = static_cast<long double>(y.cols());
  long double total = 0.0L;
  if (kind == LossKind::mse) {
    for (std::size_t i = 0; i < y.rows(); ++i)
      for (std::size_t j = 0; j < y.cols(); ++j) {
        const long double d = y_hat[i][j] - y(i, j);
        total += 0.5L * d * d;
      }
    return total / batch;
  }
  for (std::size_t j = 0; j < y.cols(); ++j) {
    long double peak = y_hat[0][j];
    for (std::size_t i = 1; i < y.rows(); ++i) peak = std::max(peak, y_hat[i][j]);
    long double denom = 0.0L;
    for (std::size_t i = 0; i < y.rows(); ++i) denom += std::exp(y_hat[i][j] - peak);
    for (std::size_t i = 0; i < y.rows(); ++i)
      if (y(i, j) == 1.0) total += -(y_hat[i][j] - peak - std::log(denom));
  }
  return total / batch;
}

}  // namespace

Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      c(i, j) = acc;
    }
  return c;
}

std::vector<double> singular_values_via_gram(const Matrix& w) {
  const Eigen::MatrixXd e = to_eigen(w);
  const Eigen::MatrixXd gram = w.rows() >= w.cols() ? Eigen::MatrixXd(e.transpose() * e)
                                                    : Eigen::MatrixXd(e * e.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
  std::vector<double> out;
  for (Eigen::Index k = 0; k < solver.eigenvalues().size(); ++k) {
    out.push_back(std::sqrt(std::max(0.0, solver.eigenvalues()(k))));
  }
  std::sort(out.begin(), out.end(), std::greater<>());
  return out;
}

double truncated_svd_error(const Matrix& w, std::size_t k) {
  const Eigen::MatrixXd e = to_eigen(w);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(e, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto kk = static_cast<Eigen::Index>(k);
  Eigen::MatrixXd approx = Eigen::MatrixXd::Zero(e.rows(), e.cols());
  if (kk > 0) {
    approx = svd.matrixU().leftCols(kk) * svd.singularValues().head(kk).asDiagonal() *
             svd.matrixV().leftCols(kk).transpose();
  }
  return (e - approx).norm();
}

Matrix dense_forward(const LoraLinear& layer, const Matrix& x) {
  const LMat y = mul(dense_effective(layer), to_long(x));
  Matrix out(y.size(), y.front().size());
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) = static_cast<double>(y[i][j]);
  return out;
}

long double linear_probe_loss(const LoraLinear& layer, const Matrix& x, const Matrix& g) {
  const LMat y = mul(dense_effective(layer), to_long(x));
  long double acc = 0.0L;
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j) acc += static_cast<long double>(g(i, j)) * y[i][j];
  return acc;
}

long double loss_value(LossKind kind, const Matrix& y_hat, const Matrix& y) {
  return loss_long(kind, to_long(y_hat), y);
}

long double net_loss(const SrloraNet& net, const Matrix& x, const Matrix& y, LossKind kind) {
  LMat h = to_long(x);
  for (const DenseLayer& l : net.layers()) {
    LMat z = mul(dense_effective(l.linear), h);
    for (std::size_t i = 0; i < z.size(); ++i)
      for (std::size_t j = 0; j < z[i].size(); ++j) {
        z[i][j] += l.bias(i, 0);
        if (l.activation == Activation::relu && !(z[i][j] > 0.0L)) z[i][j] = 0.0L;
      }
    h = std::move(z);
  }
  return loss_long(kind, h, y);
}

Matrix central_difference(Matrix& param, double h, const std::function<long double()>& f) {
  Matrix out(param.rows(), param.cols());
  for (std::size_t k = 0; k < param.size(); ++k) {
    const double saved = param.data()[k];
    const double plus = saved + h;
    const double minus = saved - h;
    param.data()[k] = plus;
    const long double f_plus = f();
    param.data()[k] = minus;
    const long double f_minus = f();
    param.data()[k] = saved;
    out.data()[k] = static_cast<double>((f_plus - f_minus) / (static_cast<long double>(plus) - minus));
  }
  return out;
}

double max_relative_error(const Matrix& numeric, const Matrix& analytic, double floor) {
  double worst = 0.0;
  for (std::size_t k = 0; k < numeric.size(); ++k) {
    const double an = analytic.data()[k];
    const double err = std::fabs(numeric.data()[k] - an) / std::max(std::fabs(an), floor);
    worst = std::max(worst, err);
  }
  return worst;
}

double two_pass_variance(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(xs.size());
}

std::vector<std::pair<std::size_t, std::vector<double>>> ledger_durations(const SlotLedger& ledger,
                                                                          std::size_t n_all) {
  std::map<std::size_t, std::vector<double>> by_layer;
  for (const Episode& e : ledger.episodes()) {
    const std::size_t end = e.retired_step ? *e.retired_step : n_all;
    by_layer[e.layer].push_back(static_cast<double>(end) - static_cast<double>(e.activated_step));
  }
  return {by_layer.begin(), by_layer.end()};
}

std::pair<double, double> scalar_ema(const std::vector<double>& sensitivities, double beta1, double beta2) {
  double i_bar = 0.0;
  double u_bar = 0.0;
  for (double s : sensitivities) {
    i_bar = beta1 * i_bar + (1.0 - beta1) * s;
    u_bar = beta2 * u_bar + (1.0 - beta2) * std::fabs(s - i_bar);
  }
  return {i_bar, u_bar};
}

}  // namespace srlora::oracle
