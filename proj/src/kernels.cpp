#include "srlora/kernels.hpp"

#include <omp.h>

#include <string>

#include "srlora/error.hpp"

namespace srlora::kernels {

namespace {

struct GemmShape {
  std::size_t m, k, n;
};

GemmShape check_shapes(const Matrix& a, Op op_a, const Matrix& b, Op op_b) {
  const std::size_t am = op_a == Op::none ? a.rows() : a.cols();
  const std::size_t ak = op_a == Op::none ? a.cols() : a.rows();
  const std::size_t bk = op_b == Op::none ? b.rows() : b.cols();
  const std::size_t bn = op_b == Op::none ? b.cols() : b.rows();
  if (a.empty() || b.empty() || ak != bk) {
    fail_validation("matmul: inner dimension mismatch, " + std::string(op_a == Op::none ? "" : "T(") +
                    a.shape_string() + (op_a == Op::none ? "" : ")") + " times " +
                    (op_b == Op::none ? "" : "T(") + b.shape_string() +
                    (op_b == Op::none ? "" : ")"));
  }
  return {am, ak, bn};
}

// Row i of op(a) · op(b), accumulated over p in ascending order.
inline void gemm_row(const Matrix& a, Op op_a, const Matrix& b, Op op_b, const GemmShape& s,
                     std::size_t i, double* out) {
  for (std::size_t j = 0; j < s.n; ++j) out[j] = 0.0;
  for (std::size_t p = 0; p < s.k; ++p) {
    const double aip = op_a == Op::none ? a(i, p) : a(p, i);
    if (op_b == Op::none) {
      const double* brow = b.row(p).data();
      for (std::size_t j = 0; j < s.n; ++j) out[j] += aip * brow[j];
    } else {
      for (std::size_t j = 0; j < s.n; ++j) out[j] += aip * b(j, p);
    }
  }
}

// Below this many multiply-adds the fork/join costs more than the work.
constexpr std::size_t kParallelThreshold = 1u << 15;

}  // namespace

namespace serial {

Matrix gemm(const Matrix& a, Op op_a, const Matrix& b, Op op_b) {
  const GemmShape s = check_shapes(a, op_a, b, op_b);
  Matrix c(s.m, s.n);
  for (std::size_t i = 0; i < s.m; ++i) gemm_row(a, op_a, b, op_b, s, i, c.row(i).data());
  return c;
}

}  // namespace serial

namespace omp {

Matrix gemm(const Matrix& a, Op op_a, const Matrix& b, Op op_b) {
  const GemmShape s = check_shapes(a, op_a, b, op_b);
  Matrix c(s.m, s.n);
  const auto rows = static_cast<std::ptrdiff_t>(s.m);
  const bool parallel = s.m * s.k * s.n >= kParallelThreshold && s.m > 1;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const auto row = static_cast<std::size_t>(i);
    gemm_row(a, op_a, b, op_b, s, row, c.row(row).data());
  }
  return c;
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace omp

}  // namespace srlora::kernels
