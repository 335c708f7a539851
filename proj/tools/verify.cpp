#include "verify.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "srlora/error.hpp"
#include "srlora/log.hpp"
#include "srlora/trainer.hpp"

namespace srlora::verify {

namespace {

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(3);
  s << std::scientific << x;
  return s.str();
}

PropertyResult bound(const std::string& suite, const std::string& name, double worst, double limit) {
  return {suite, name, worst <= limit, "worst " + fmt(worst) + " (limit " + fmt(limit) + ")"};
}

double orthonormality_error(const Matrix& q) {
  Matrix g = oracle::naive_matmul(q.transpose(), q);
  g -= Matrix::identity(q.cols());
  return g.frobenius_norm();
}

// A PiSSA-initialized layer whose adapters have been moved off their
// initial values, standing in for a partially trained layer.
LoraLinear trained_layer(Rng& rng, std::size_t m, std::size_t n, std::size_t r, double alpha) {
  LoraLinear l = pissa_init(gaussian(rng, m, n, 0.0, 1.0), r, alpha);
  l.b += gaussian(rng, m, r, 0.0, 0.3);
  l.a += gaussian(rng, r, n, 0.0, 0.3);
  return l;
}

std::vector<PropertyResult> svd_suite() {
  const std::string suite = "svd";
  Rng rng(20240601);
  double order_violation = 0.0;
  double ortho = 0.0;
  double recon = 0.0;
  double spectrum = 0.0;
  int wide = 0, tall = 0, square = 0;
  for (int trial = 0; trial < 120; ++trial) {
    std::size_t m = 1 + rng.below(12);
    std::size_t n = 1 + rng.below(12);
    if (trial % 3 == 0) n = m;
    wide += m < n;
    tall += m > n;
    square += m == n;
    const Matrix w = gaussian(rng, m, n, 0.0, 1.0);
    const SvdFactors f = svd(w);
    for (std::size_t k = 0; k < f.s.size(); ++k) {
      if (f.s[k] < 0.0) order_violation = std::max(order_violation, -f.s[k]);
      if (k > 0) order_violation = std::max(order_violation, f.s[k] - f.s[k - 1]);
    }
    ortho = std::max({ortho, orthonormality_error(f.u), orthonormality_error(f.v)});
    Matrix us = f.u;
    for (std::size_t i = 0; i < us.rows(); ++i)
      for (std::size_t k = 0; k < us.cols(); ++k) us(i, k) *= f.s[k];
    recon = std::max(recon, relative_error(oracle::naive_matmul(us, f.v.transpose()), w, w));
    const std::vector<double> ref = oracle::singular_values_via_gram(w);
    for (std::size_t k = 0; k < ref.size(); ++k) spectrum = std::max(spectrum, std::fabs(ref[k] - f.s[k]) / ref[0]);
  }
  std::vector<PropertyResult> out;
  out.push_back({suite, "shape coverage (m<n, m>n, m=n)", wide > 0 && tall > 0 && square > 0,
                 std::to_string(wide) + " wide, " + std::to_string(tall) + " tall, " + std::to_string(square) +
                     " square"});
  out.push_back(bound(suite, "singular values non-negative and descending", order_violation, 0.0));
  out.push_back(bound(suite, "orthonormal factors (Frobenius)", ortho, 1e-8));
  out.push_back(bound(suite, "reconstruction (relative Frobenius)", recon, 1e-10));
  out.push_back(bound(suite, "spectrum vs eigenvalues of the Gram matrix", spectrum, 1e-8));

  double monotone = 0.0;
  double tail = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix w = gaussian(rng, 8, 8, 0.0, 1.0);
    const SvdFactors f = svd(w);
    for (std::size_t k = 0; k <= 8; ++k) {
      const double e = best_rank_k_error(f, k);
      tail = std::max(tail, std::fabs(e - oracle::truncated_svd_error(w, k)) / w.frobenius_norm());
      if (k > 0) monotone = std::max(monotone, e - best_rank_k_error(f, k - 1));
    }
  }
  out.push_back(bound(suite, "best_rank_k_error non-increasing in k", monotone, 0.0));
  out.push_back(bound(suite, "best_rank_k_error vs truncated reconstruction", tail, 1e-10));
  return out;
}

std::vector<PropertyResult> gradients_suite() {
  const std::string suite = "gradients";
  std::vector<PropertyResult> out;
  Rng rng(77);

  double worst = 0.0;
  for (int trial = 0; trial < 24; ++trial) {
    const std::size_t m = 3 + rng.below(14);
    const std::size_t n = 3 + rng.below(14);
    const std::size_t r = 1 + rng.below(4);
    LoraLinear layer = trained_layer(rng, m, n, r, 0.5 + 4.0 * rng.uniform());
    const Matrix x = gaussian(rng, n, 5, 0.0, 1.0);
    const Matrix g = gaussian(rng, m, 5, 0.0, 1.0);
    const LayerGrads an = backward(layer, x, g);
    auto loss = [&] { return oracle::linear_probe_loss(layer, x, g); };
    worst = std::max(worst, oracle::max_relative_error(oracle::central_difference(layer.b, 1e-6, loss), an.d_b));
    worst = std::max(worst, oracle::max_relative_error(oracle::central_difference(layer.a, 1e-6, loss), an.d_a));
  }
  out.push_back(bound(suite, "adapter d_b, d_a vs central differences (24 configs)", worst, 1e-5));

  for (const LossKind kind : {LossKind::mse, LossKind::softmax_cross_entropy}) {
    std::vector<DenseLayer> layers;
    const std::size_t dims[] = {6, 9, 4};
    for (std::size_t li = 0; li < 2; ++li) {
      DenseLayer d;
      d.linear = trained_layer(rng, dims[li + 1], dims[li], 3, 3.0);
      d.bias = gaussian(rng, dims[li + 1], 1, 0.0, 0.2);
      d.activation = li == 0 ? Activation::relu : Activation::identity;
      d.importance = ImportanceState::for_layer(d.linear, 0.85, 0.85);
      layers.push_back(std::move(d));
    }
    SrloraNet net(std::move(layers));
    const Matrix x = gaussian(rng, 6, 7, 0.0, 1.0);
    Matrix y(4, 7);
    if (kind == LossKind::mse) {
      y = gaussian(rng, 4, 7, 0.0, 1.0);
    } else {
      for (std::size_t j = 0; j < 7; ++j) y(rng.below(4), j) = 1.0;
    }
    const auto [out_hat, cache] = net_forward(net, x);
    const NetGrads grads = net_backward(net, cache, loss_and_grad(kind, out_hat, y).second);
    SrloraNet probe = net;
    auto loss = [&] { return oracle::net_loss(probe, x, y, kind); };
    double net_worst = 0.0;
    for (std::size_t li = 0; li < 2; ++li) {
      DenseLayer& l = probe.mutable_layer(li);
      net_worst = std::max(net_worst, oracle::max_relative_error(oracle::central_difference(l.linear.b, 1e-6, loss),
                                                                 grads.layers[li].d_b));
      net_worst = std::max(net_worst, oracle::max_relative_error(oracle::central_difference(l.linear.a, 1e-6, loss),
                                                                 grads.layers[li].d_a));
      net_worst = std::max(net_worst,
                           oracle::max_relative_error(oracle::central_difference(l.bias, 1e-6, loss), grads.bias[li]));
    }
    out.push_back(bound(suite, "2-layer relu net, " + to_string(kind) + " loss, every trainable", net_worst, 1e-5));
  }

  Matrix logits = gaussian(rng, 5, 6, 0.0, 2.0);
  Matrix onehot(5, 6);
  for (std::size_t j = 0; j < 6; ++j) onehot(rng.below(5), j) = 1.0;
  const Matrix analytic = loss_and_grad(LossKind::softmax_cross_entropy, logits, onehot).second;
  const Matrix numeric = oracle::central_difference(
      logits, 1e-6, [&] { return oracle::loss_value(LossKind::softmax_cross_entropy, logits, onehot); });
  out.push_back(bound(suite, "softmax cross-entropy gradient", oracle::max_relative_error(numeric, analytic), 1e-6));
  return out;
}

std::vector<PropertyResult> preservation_suite() {
  const std::string suite = "preservation";
  std::vector<PropertyResult> out;
  Rng rng(4242);

  double init = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 2 + rng.below(15);
    const std::size_t n = 2 + rng.below(15);
    const std::size_t r = 1 + rng.below(std::min(m, n));
    const Matrix w0 = gaussian(rng, m, n, 0.0, 1.0);
    const LoraLinear l = pissa_init(w0, r, static_cast<double>(r));
    init = std::max(init, relative_error(oracle::dense_forward(l, Matrix::identity(n)), w0, w0));
  }
  out.push_back(bound(suite, "PiSSA residual + scale*B*A reproduces w0 (20 configs)", init, 1e-8));

  double recompose = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t r = 2 + 2 * rng.below(3);
    LoraLinear l = trained_layer(rng, 16, 12, r, 1.0 + rng.uniform() * 8.0);
    ImportanceState state = ImportanceState::for_layer(l, 0.85, 0.85);
    state.i_bar_b = abs(gaussian(rng, 16, r, 0.0, 1.0));
    state.u_bar_b = abs(gaussian(rng, 16, r, 0.0, 1.0));
    state.i_bar_a = abs(gaussian(rng, r, 12, 0.0, 1.0));
    state.u_bar_a = abs(gaussian(rng, r, 12, 0.0, 1.0));
    const SwitchSchedule sched = build_schedule(r, 0.5, r + r / 2, 10);
    SlotLedger ledger;
    const Matrix x = gaussian(rng, 12, 10, 0.0, 1.0);
    const Matrix before = forward(l, x);
    recompose_step(l, state, sched, ledger, 0, sched.switch_steps.front());
    recompose = std::max(recompose, relative_error(forward(l, x), before, before));
  }
  out.push_back(bound(suite, "recompose_step leaves the layer map unchanged (10 probes)", recompose, 1e-6));

  RunConfig cfg;
  cfg.seed = 5;
  cfg.n_all = 300;
  cfg.rank = 4;
  cfg.alpha = 4;
  cfg.r_target = 12;
  cfg.learning_rate = 0.02;
  cfg.layers = {{16, 16, Activation::relu, true}, {16, 16, Activation::identity, true}};
  cfg.dataset.teacher = {16, 16, 8, 0.0, 1.0, 0.0, 256, 128};
  Trainer t(cfg);
  t.run();
  double run_worst = 0.0;
  for (const SwitchRecord& s : t.switches()) run_worst = std::max(run_worst, s.probe_relative_change);
  out.push_back({suite, "end-to-end run: probe output across every switch",
                 !t.switches().empty() && run_worst <= 1e-6,
                 std::to_string(t.switches().size()) + " switches, worst " + fmt(run_worst)});
  return out;
}

std::vector<PropertyResult> schedule_suite() {
  const std::string suite = "schedule";
  std::vector<PropertyResult> out;
  const SwitchSchedule big = build_schedule(8, 0.5, 512, 100000);
  out.push_back({suite, "r=8, gamma=0.5, r_target=512 gives r'=4, 126 switches",
                 big.r_prime == 4 && big.n_switch == 126, "n_switch=" + std::to_string(big.n_switch)});
  const SwitchSchedule small = build_schedule(8, 0.5, 16, 1000);
  out.push_back({suite, "r_target=16, n_all=1000 switches at {500, 1000}",
                 small.switch_steps == std::vector<std::size_t>{500, 1000} && small.t_interval == 500, ""});
  out.push_back({suite, "r_target=r gives an empty schedule", build_schedule(8, 0.5, 8, 10).switch_steps.empty(), ""});
  bool rejected = false;
  try {
    build_schedule(8, 0.5, 18, 1000);
  } catch (const Error& e) {
    rejected = e.kind() == ErrorKind::validation;
  }
  out.push_back({suite, "non-divisible r_target - r is rejected", rejected, ""});

  RunConfig cfg;
  cfg.seed = 9;
  cfg.n_all = 400;
  cfg.rank = 4;
  cfg.alpha = 4;
  cfg.r_target = 16;
  cfg.dataset.teacher = {16, 16, 8, 0.0, 1.0, 0.0, 256, 128};
  Trainer t(cfg);
  t.run();
  const auto violation = t.ledger().check_invariants();
  out.push_back({suite, "ledger episodes ordered, non-overlapping, never reuse a direction", !violation,
                 violation.value_or("")});
  std::set<std::size_t> expected;
  for (std::size_t k = 0; k < 16; ++k) expected.insert(k);
  out.push_back({suite, "explored directions are exactly {0..r_target-1}", t.ledger().activated_indices(0) == expected,
                 ""});
  const auto rows = interval_variance(t.ledger(), cfg.n_all);
  const auto durations = oracle::ledger_durations(t.ledger(), cfg.n_all);
  double worst = rows.size() == durations.size() ? 0.0 : 1.0;
  for (std::size_t k = 0; k < std::min(rows.size(), durations.size()); ++k) {
    worst = std::max(worst, std::fabs(rows[k].variance - oracle::two_pass_variance(durations[k].second)));
  }
  out.push_back(bound(suite, "interval variance vs two-pass oracle", worst, 1e-12));
  return out;
}

}  // namespace

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"svd", "gradients", "preservation", "schedule"};
  return names;
}

std::vector<PropertyResult> run_suite(const std::string& name) {
  if (name == "all") {
    std::vector<PropertyResult> all;
    for (const std::string& s : suite_names()) {
      auto part = run_suite(s);
      all.insert(all.end(), part.begin(), part.end());
    }
    return all;
  }
  const WarningSink previous = set_warning_sink({});
  std::vector<PropertyResult> out;
  try {
    if (name == "svd") out = svd_suite();
    else if (name == "gradients") out = gradients_suite();
    else if (name == "preservation") out = preservation_suite();
    else if (name == "schedule") out = schedule_suite();
    else fail_validation("unknown suite '" + name + "' (expected svd|gradients|preservation|schedule|all)");
  } catch (...) {
    set_warning_sink(previous);
    throw;
  }
  set_warning_sink(previous);
  return out;
}

}  // namespace srlora::verify
