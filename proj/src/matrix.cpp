#include "srlora/matrix.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>

#include "srlora/error.hpp"

namespace srlora {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols) {
  if (rows == 0 || cols == 0) {
    fail_validation("matrix dimensions must be positive, got " + std::to_string(rows) + "x" +
                    std::to_string(cols));
  }
  data_.assign(rows * cols, fill);
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  if (rows.size() == 0 || rows.begin()->size() == 0) fail_validation("empty matrix literal");
  rows_ = rows.size();
  cols_ = rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) fail_validation("ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> values) {
  Matrix m(values.size(), values.size());
  for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
  return m;
}

Matrix Matrix::column(std::span<const double> values) {
  Matrix m(values.size(), 1);
  for (std::size_t i = 0; i < values.size(); ++i) m(i, 0) = values[i];
  return m;
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Matrix Matrix::column_block(std::size_t first, std::size_t count) const {
  if (count == 0 || first + count > cols_) {
    fail_validation("column block [" + std::to_string(first) + ", " +
                    std::to_string(first + count) + ") out of range for " + shape_string());
  }
  Matrix out(rows_, count);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = (*this)(i, first + j);
  return out;
}

Matrix& Matrix::operator+=(const Matrix& other) {
  require_same_shape(*this, other, "matrix +=");
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += other.data_[k];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require_same_shape(*this, other, "matrix -=");
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= other.data_[k];
  return *this;
}

Matrix& Matrix::operator*=(double scalar) {
  for (double& x : data_) x *= scalar;
  return *this;
}

void Matrix::fill(double value) {
  for (double& x : data_) x = value;
}

double Matrix::frobenius_norm() const {
  // Scaled accumulation so tiny and huge entries neither underflow nor overflow.
  double scale = 0.0;
  double ssq = 1.0;
  for (double x : data_) {
    if (x == 0.0) continue;
    const double ax = std::fabs(x);
    if (scale < ax) {
      ssq = 1.0 + ssq * (scale / ax) * (scale / ax);
      scale = ax;
    } else {
      ssq += (ax / scale) * (ax / scale);
    }
  }
  return scale * std::sqrt(ssq);
}

bool Matrix::all_finite() const {
  for (double x : data_)
    if (!std::isfinite(x)) return false;
  return true;
}

std::string Matrix::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double scalar) { return a *= scalar; }
Matrix operator*(double scalar, Matrix a) { return a *= scalar; }

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a;
  auto o = out.data();
  auto bd = b.data();
  for (std::size_t k = 0; k < o.size(); ++k) o[k] *= bd[k];
  return out;
}

Matrix abs(const Matrix& a) {
  Matrix out = a;
  for (double& x : out.data()) x = std::fabs(x);
  return out;
}

double relative_error(const Matrix& a, const Matrix& b, const Matrix& reference) {
  const double num = (a - b).frobenius_norm();
  const double den = reference.frobenius_norm();
  return den > 0.0 ? num / den : num;
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* context) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail_validation(std::string(context) + ": shape mismatch " + a.shape_string() + " vs " +
                    b.shape_string());
  }
}

namespace {

constexpr std::array<char, 4> kMatrixMagic{'S', 'R', 'L', 'M'};

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  out.write(b.data(), b.size());
}

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  out.write(b.data(), b.size());
}

std::uint64_t get_le(std::istream& in, int width, const char* what) {
  std::array<unsigned char, 8> b{};
  in.read(reinterpret_cast<char*>(b.data()), width);
  if (in.gcount() != width) fail_io(std::string("truncated matrix record while reading ") + what);
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_matrix(std::ostream& out, const Matrix& m) {
  if (m.rows() > UINT32_MAX || m.cols() > UINT32_MAX) fail_validation("matrix too large to serialize");
  out.write(kMatrixMagic.data(), kMatrixMagic.size());
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (double x : m.data()) put_u64(out, std::bit_cast<std::uint64_t>(x));
  if (!out) fail_io("failed writing matrix record");
}

Matrix read_matrix(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != 4) fail_io("truncated matrix record (magic)");
  if (magic != kMatrixMagic) fail_io("bad matrix magic, expected SRLM");
  const auto rows = static_cast<std::size_t>(get_le(in, 4, "rows"));
  const auto cols = static_cast<std::size_t>(get_le(in, 4, "cols"));
  if (rows == 0 || cols == 0) fail_io("matrix record with zero dimension");
  Matrix m(rows, cols);
  for (double& x : m.data()) x = std::bit_cast<double>(get_le(in, 8, "data"));
  return m;
}

}  // namespace srlora
