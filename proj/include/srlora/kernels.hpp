#pragma once

#include "srlora/matrix.hpp"

// GEMM kernels in two flavours. `serial` is the plain reference kept for
// testing; `omp` parallelizes over output rows. Both accumulate every output
// entry over the inner index in the same ascending order, so they agree
// bit-for-bit at any thread count.

namespace srlora::kernels {

enum class Op { none, transpose };

namespace serial {

/// c = op(a) · op(b)
Matrix gemm(const Matrix& a, Op op_a, const Matrix& b, Op op_b);

}  // namespace serial

namespace omp {

Matrix gemm(const Matrix& a, Op op_a, const Matrix& b, Op op_b);

/// Threads the omp kernels will use (omp_get_max_threads()).
int max_threads();

}  // namespace omp

}  // namespace srlora::kernels
