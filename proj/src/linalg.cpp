#include "srlora/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "srlora/kernels.hpp"

namespace srlora {

using kernels::Op;

Matrix matmul(const Matrix& a, const Matrix& b) { return kernels::omp::gemm(a, Op::none, b, Op::none); }

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  return kernels::omp::gemm(a, Op::transpose, b, Op::none);
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  return kernels::omp::gemm(a, Op::none, b, Op::transpose);
}

namespace {

double dot(const std::vector<double>& x, const std::vector<double>& y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return acc;
}

double norm(const std::vector<double>& x) { return std::sqrt(dot(x, x)); }

// Hestenes one-sided Jacobi on a tall matrix (rows >= cols).
// Columns are held as contiguous vectors.
SvdFactors jacobi_tall(const Matrix& w, const SvdOptions& opt) {
  const std::size_t m = w.rows();
  const std::size_t n = w.cols();

  std::vector<std::vector<double>> g(n, std::vector<double>(m));
  std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) g[j][i] = w(i, j);
    v[j][j] = 1.0;
  }

  double worst = 0.0;
  bool converged = false;
  for (int sweep = 0; sweep < opt.max_sweeps && !converged; ++sweep) {
    converged = true;
    worst = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double alpha = dot(g[p], g[p]);
        const double beta = dot(g[q], g[q]);
        const double gamma = dot(g[p], g[q]);
        if (alpha == 0.0 || beta == 0.0 || gamma == 0.0) continue;
        const double off = std::fabs(gamma) / (std::sqrt(alpha) * std::sqrt(beta));
        worst = std::max(worst, off);
        if (off <= opt.tolerance) continue;
        converged = false;

        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::fabs(zeta) + std::hypot(1.0, zeta));
        const double c = 1.0 / std::hypot(1.0, t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double gp = g[p][i];
          const double gq = g[q][i];
          g[p][i] = c * gp - s * gq;
          g[q][i] = s * gp + c * gq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vp = v[p][i];
          const double vq = v[q][i];
          v[p][i] = c * vp - s * vq;
          v[q][i] = s * vp + c * vq;
        }
      }
    }
  }
  if (!converged) {
    std::ostringstream msg;
    msg << "svd: no convergence after " << opt.max_sweeps << " sweeps on " << w.shape_string()
        << ", residual off-diagonal " << worst;
    fail_runtime(msg.str());
  }

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) sigma[j] = norm(g[j]);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  SvdFactors f{Matrix(m, n), std::vector<double>(n), Matrix(n, n)};
  std::vector<std::vector<double>> ucols;
  ucols.reserve(n);
  std::vector<std::size_t> missing;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    f.s[k] = sigma[j];
    for (std::size_t i = 0; i < n; ++i) f.v(i, k) = v[j][i];
    std::vector<double> col(m, 0.0);
    if (sigma[j] > 0.0) {
      for (std::size_t i = 0; i < m; ++i) col[i] = g[j][i] / sigma[j];
    } else {
      missing.push_back(k);
    }
    ucols.push_back(std::move(col));
  }

  // Zero singular values leave their left vectors undetermined; complete them
  // to an orthonormal set from the canonical basis.
  std::size_t candidate = 0;
  for (std::size_t k : missing) {
    while (candidate < m) {
      std::vector<double> e(m, 0.0);
      e[candidate++] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t other = 0; other < n; ++other) {
          if (other == k) continue;
          const double proj = dot(e, ucols[other]);
          for (std::size_t i = 0; i < m; ++i) e[i] -= proj * ucols[other][i];
        }
      }
      const double len = norm(e);
      if (len > 0.5) {
        for (double& x : e) x /= len;
        ucols[k] = std::move(e);
        break;
      }
    }
  }

  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < m; ++i) f.u(i, k) = ucols[k][i];
  return f;
}

void normalize_signs(SvdFactors& f) {
  for (std::size_t k = 0; k < f.s.size(); ++k) {
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < f.u.rows(); ++i) {
      if (std::fabs(f.u(i, k)) > best) {
        best = std::fabs(f.u(i, k));
        arg = i;
      }
    }
    if (f.u(arg, k) < 0.0) {
      for (std::size_t i = 0; i < f.u.rows(); ++i) f.u(i, k) = -f.u(i, k);
      for (std::size_t i = 0; i < f.v.rows(); ++i) f.v(i, k) = -f.v(i, k);
    }
  }
}

}  // namespace

SvdFactors svd(const Matrix& w, const SvdOptions& options) {
  if (w.empty()) fail_validation("svd: empty matrix");
  if (!w.all_finite()) fail_validation("svd: input has non-finite entries");
  SvdFactors f;
  if (w.rows() >= w.cols()) {
    f = jacobi_tall(w, options);
  } else {
    SvdFactors t = jacobi_tall(w.transpose(), options);
    f = SvdFactors{std::move(t.v), std::move(t.s), std::move(t.u)};
  }
  normalize_signs(f);
  return f;
}

Matrix reconstruct(const SvdFactors& f) {
  Matrix us = f.u;
  for (std::size_t i = 0; i < us.rows(); ++i)
    for (std::size_t k = 0; k < us.cols(); ++k) us(i, k) *= f.s[k];
  return matmul_nt(us, f.v);
}

double best_rank_k_error(const SvdFactors& f, std::size_t k) {
  if (k > f.s.size()) {
    fail_validation("best_rank_k_error: k=" + std::to_string(k) + " exceeds min(m, n)=" +
                    std::to_string(f.s.size()));
  }
  double tail = 0.0;
  for (std::size_t i = f.s.size(); i > k; --i) tail += f.s[i - 1] * f.s[i - 1];
  return std::sqrt(tail);
}

double best_rank_k_error(const Matrix& w, std::size_t k) {
  if (k > std::min(w.rows(), w.cols())) {
    fail_validation("best_rank_k_error: k=" + std::to_string(k) + " exceeds min(m, n) of " +
                    w.shape_string());
  }
  return best_rank_k_error(svd(w), k);
}

std::size_t numerical_rank(const Matrix& w, double relative_threshold) {
  const SvdFactors f = svd(w);
  if (f.s.empty() || f.s[0] == 0.0) return 0;
  return static_cast<std::size_t>(std::count_if(
      f.s.begin(), f.s.end(), [&](double x) { return x > relative_threshold * f.s[0]; }));
}

std::uint64_t Rng::next_u64() {
  std::uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double Rng::uniform() {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) fail_validation("Rng::below: bound must be positive");
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % bound;
}

Matrix gaussian(Rng& rng, std::size_t rows, std::size_t cols, double mean, double stddev) {
  if (!(stddev >= 0.0)) fail_validation("gaussian: stddev must be >= 0");
  Matrix m(rows, cols);
  for (double& x : m.data()) x = mean + stddev * rng.normal();
  return m;
}

}  // namespace srlora
