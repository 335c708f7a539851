#pragma once

// Independent reference computations used by the unit tests, the acceptance
// suite and `srlora verify`. Nothing here calls into the production kernels:
// products are naive loops, spectra come from Eigen, losses are evaluated in
// long double.

#include <cstddef>
#include <functional>
#include <vector>

#include "srlora/adapter.hpp"
#include "srlora/model.hpp"
#include "srlora/recompose.hpp"

namespace srlora::oracle {

/// Triple loop, i-j-k order.
Matrix naive_matmul(const Matrix& a, const Matrix& b);

/// Singular values as sqrt of the eigenvalues of wᵀw (Eigen self-adjoint
/// solver), descending, length min(m, n).
std::vector<double> singular_values_via_gram(const Matrix& w);

/// ‖w − truncated_k(w)‖_F where the truncation comes from Eigen's SVD.
double truncated_svd_error(const Matrix& w, std::size_t k);

/// (w + scale·b·a)·x with the product materialized, in long double.
Matrix dense_forward(const LoraLinear& layer, const Matrix& x);

/// ⟨g, (w + scale·b·a)·x⟩ in long double.
long double linear_probe_loss(const LoraLinear& layer, const Matrix& x, const Matrix& g);

/// Full network loss, every operation in long double.
long double net_loss(const SrloraNet& net, const Matrix& x, const Matrix& y, LossKind kind);

/// Loss of y_hat against y in long double.
long double loss_value(LossKind kind, const Matrix& y_hat, const Matrix& y);

/// Central difference of f at `param` (entry-wise), step h. The realized
/// step (θ+h) − (θ−h) is used as the denominator.
Matrix central_difference(Matrix& param, double h, const std::function<long double()>& f);

/// max over entries of |numeric − analytic| / max(|analytic|, floor).
double max_relative_error(const Matrix& numeric, const Matrix& analytic, double floor = 1e-8);

/// Population variance, mean first then squared deviations.
double two_pass_variance(const std::vector<double>& xs);

/// Per-layer durations straight from the episode list.
std::vector<std::pair<std::size_t, std::vector<double>>> ledger_durations(const SlotLedger& ledger,
                                                                          std::size_t n_all);

/// Scalar Ī/Ū recurrence for one parameter over a sequence of sensitivities.
std::pair<double, double> scalar_ema(const std::vector<double>& sensitivities, double beta1, double beta2);

}  // namespace srlora::oracle
