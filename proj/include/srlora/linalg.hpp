#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "srlora/error.hpp"
#include "srlora/matrix.hpp"

namespace srlora {

/// a · b. Rejects a.cols != b.rows with both shapes in the message.
Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ · b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a · bᵀ
Matrix matmul_nt(const Matrix& a, const Matrix& b);

/// Thin SVD w = u · diag(s) · vᵀ with d = min(m, n) factors.
///
/// s is non-increasing; each pair (u_k, v_k) is signed so that the
/// largest-magnitude entry of u_k is positive (first one on ties).
struct SvdFactors {
  Matrix u;               // m x d
  std::vector<double> s;  // d, descending
  Matrix v;               // n x d

  std::size_t rank_capacity() const noexcept { return s.size(); }

  friend bool operator==(const SvdFactors&, const SvdFactors&) = default;
};

struct SvdOptions {
  int max_sweeps = 60;
  double tolerance = 1e-12;  // relative off-diagonal threshold
};

/// One-sided (Hestenes) Jacobi SVD. Throws a runtime Error carrying the
/// residual off-diagonal measure if the sweep cap is hit.
SvdFactors svd(const Matrix& w, const SvdOptions& options = {});

/// u · diag(s) · vᵀ
Matrix reconstruct(const SvdFactors& f);

/// sqrt(Σ_{i>k} σ_i²): the Frobenius error of the best rank-k approximation.
double best_rank_k_error(const Matrix& w, std::size_t k);
double best_rank_k_error(const SvdFactors& f, std::size_t k);

/// Number of singular values above `relative_threshold` · σ_max.
std::size_t numerical_rank(const Matrix& w, double relative_threshold = 1e-10);

/// Counter-based generator (splitmix64 over seed + counter). The whole state
/// is (seed, counter), which makes checkpointing trivial and streams
/// reproducible across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t counter = 0)
      : seed_(seed), counter_(counter) {}

  std::uint64_t next_u64();
  /// Uniform in the open interval (0, 1).
  double uniform();
  /// Standard normal via Box-Muller; consumes two uniforms.
  double normal();
  /// Uniform integer in [0, bound). bound > 0.
  std::uint64_t below(std::uint64_t bound);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  friend bool operator==(const Rng&, const Rng&) = default;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

Matrix gaussian(Rng& rng, std::size_t rows, std::size_t cols, double mean, double stddev);

}  // namespace srlora
