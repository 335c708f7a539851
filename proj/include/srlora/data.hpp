#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "srlora/linalg.hpp"

namespace srlora {

enum class TaskKind { regression, classification };

/// Samples are columns: inputs is features x samples, targets is
/// target-dim x samples. Classification targets are one-hot columns and
/// `labels[k]` names class k.
struct Dataset {
  Matrix inputs;
  Matrix targets;
  TaskKind kind = TaskKind::regression;
  std::vector<std::string> labels;

  std::size_t samples() const noexcept { return inputs.cols(); }
};

/// Linear teacher y = (w0 + delta_star)·x + noise.
struct TeacherSpec {
  Matrix w0;
  Matrix delta_star;
  double noise_std = 0.0;
  std::uint64_t seed = 0;
};

/// w0 ~ N(0, w0_std²); delta_star = delta_scale · P·Qᵀ / sqrt(k_star·d_in) with
/// P, Q standard normal, so it has rank k_star exactly (almost surely).
TeacherSpec make_teacher(std::size_t d_out, std::size_t d_in, std::size_t k_star, double w0_std,
                         double delta_scale, double noise_std, std::uint64_t seed);

/// x ~ N(0, I); deterministic in spec.seed.
Dataset gen_teacher_student(const TeacherSpec& spec, std::size_t n_samples);

struct CsvSchema {
  std::string path;
  std::vector<std::string> feature_columns;
  std::string label_column;
};

/// Header row required; comma separated, no quoting. Labels become one-hot
/// classes in order of first appearance.
Dataset load_csv(const CsvSchema& schema);
Dataset parse_csv(std::istream& in, const CsvSchema& schema);

/// Writes a classification dataset back out with the given feature names.
void write_csv(std::ostream& out, const Dataset& ds, const std::vector<std::string>& feature_names,
               const std::string& label_column);

Matrix gather_columns(const Matrix& m, std::span<const std::size_t> columns);

/// Seeded Fisher-Yates permutation of [0, n).
std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng);

/// One epoch of mini-batches over a fresh permutation; the last batch may be short.
std::vector<std::pair<Matrix, Matrix>> batches(const Dataset& ds, std::size_t batch_size, Rng& rng);

/// Endless epoch-by-epoch batch source whose full state is (rng, order, pos).
class BatchStream {
 public:
  BatchStream(std::size_t batch_size, Rng rng) : batch_size_(batch_size), rng_(rng) {}

  std::pair<Matrix, Matrix> next(const Dataset& ds);

  std::size_t batch_size() const noexcept { return batch_size_; }
  const Rng& rng() const noexcept { return rng_; }
  const std::vector<std::size_t>& order() const noexcept { return order_; }
  std::size_t position() const noexcept { return pos_; }

  void restore(Rng rng, std::vector<std::size_t> order, std::size_t pos);

 private:
  std::size_t batch_size_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

}  // namespace srlora
