#include "srlora/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>

#include "srlora/csv.hpp"
#include "srlora/error.hpp"

namespace srlora {

TeacherSpec make_teacher(std::size_t d_out, std::size_t d_in, std::size_t k_star, double w0_std,
                         double delta_scale, double noise_std, std::uint64_t seed) {
  if (k_star > std::min(d_out, d_in)) {
    fail_validation("teacher: k_star=" + std::to_string(k_star) + " exceeds min(d_out, d_in)");
  }
  if (!(noise_std >= 0.0)) fail_validation("teacher: noise_std must be >= 0");
  Rng rng(seed);
  TeacherSpec spec;
  spec.w0 = gaussian(rng, d_out, d_in, 0.0, w0_std);
  if (k_star == 0) {
    spec.delta_star = Matrix(d_out, d_in);
  } else {
    const Matrix p = gaussian(rng, d_out, k_star, 0.0, 1.0);
    const Matrix q = gaussian(rng, d_in, k_star, 0.0, 1.0);
    spec.delta_star = (delta_scale / std::sqrt(static_cast<double>(k_star * d_in))) * matmul_nt(p, q);
  }
  spec.noise_std = noise_std;
  spec.seed = seed;
  return spec;
}

Dataset gen_teacher_student(const TeacherSpec& spec, std::size_t n_samples) {
  if (n_samples == 0) fail_validation("gen_teacher_student: n_samples must be >= 1");
  require_same_shape(spec.w0, spec.delta_star, "gen_teacher_student");
  Rng rng(spec.seed);
  Dataset ds;
  ds.kind = TaskKind::regression;
  ds.inputs = gaussian(rng, spec.w0.cols(), n_samples, 0.0, 1.0);
  ds.targets = matmul(spec.w0 + spec.delta_star, ds.inputs);
  if (spec.noise_std > 0.0) ds.targets += gaussian(rng, ds.targets.rows(), n_samples, 0.0, spec.noise_std);
  return ds;
}

Dataset parse_csv(std::istream& in, const CsvSchema& schema) {
  if (schema.feature_columns.empty()) fail_validation("csv schema: no feature columns");
  std::string line;
  if (!std::getline(in, line)) fail_validation("csv: missing header row");
  const std::vector<std::string> header = csv::split_line(line);
  std::map<std::string, std::size_t> column_of;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c].find('"') != std::string::npos) fail_validation("csv line 1: quoted fields are not supported");
    column_of.emplace(header[c], c);
  }
  auto locate = [&](const std::string& name) {
    const auto it = column_of.find(name);
    if (it == column_of.end()) fail_validation("csv: column '" + name + "' not in header");
    return it->second;
  };
  std::vector<std::size_t> feature_idx;
  for (const std::string& f : schema.feature_columns) feature_idx.push_back(locate(f));
  const std::size_t label_idx = locate(schema.label_column);

  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> classes;
  std::vector<std::string> labels;
  std::map<std::string, std::size_t> label_of;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::string where = "csv line " + std::to_string(line_no);
    if (line.find('"') != std::string::npos) fail_validation(where + ": quoted fields are not supported");
    const std::vector<std::string> fields = csv::split_line(line);
    if (fields.size() != header.size()) {
      fail_validation(where + ": expected " + std::to_string(header.size()) + " fields, found " +
                      std::to_string(fields.size()));
    }
    std::vector<double> row;
    row.reserve(feature_idx.size());
    for (std::size_t c : feature_idx) row.push_back(csv::parse_double(fields[c], where));
    const std::string& label = fields[label_idx];
    if (label.empty()) fail_validation(where + ": empty label");
    auto [it, inserted] = label_of.emplace(label, labels.size());
    if (inserted) labels.push_back(label);
    classes.push_back(it->second);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail_validation("csv: no data rows");

  Dataset ds;
  ds.kind = TaskKind::classification;
  ds.labels = labels;
  ds.inputs = Matrix(feature_idx.size(), rows.size());
  ds.targets = Matrix(labels.size(), rows.size());
  for (std::size_t s = 0; s < rows.size(); ++s) {
    for (std::size_t f = 0; f < feature_idx.size(); ++f) ds.inputs(f, s) = rows[s][f];
    ds.targets(classes[s], s) = 1.0;
  }
  return ds;
}

Dataset load_csv(const CsvSchema& schema) {
  std::ifstream in(schema.path);
  if (!in) fail_io("cannot open csv '" + schema.path + "'");
  return parse_csv(in, schema);
}

void write_csv(std::ostream& out, const Dataset& ds, const std::vector<std::string>& feature_names,
               const std::string& label_column) {
  if (ds.kind != TaskKind::classification) fail_validation("write_csv: only classification datasets");
  if (feature_names.size() != ds.inputs.rows()) fail_validation("write_csv: feature name count mismatch");
  for (const std::string& n : feature_names) out << n << ',';
  out << label_column << '\n';
  for (std::size_t s = 0; s < ds.samples(); ++s) {
    for (std::size_t f = 0; f < ds.inputs.rows(); ++f) out << csv::format_double(ds.inputs(f, s)) << ',';
    std::size_t cls = 0;
    while (cls < ds.targets.rows() && ds.targets(cls, s) != 1.0) ++cls;
    if (cls == ds.targets.rows()) fail_validation("write_csv: sample without a class");
    out << ds.labels.at(cls) << '\n';
  }
}

Matrix gather_columns(const Matrix& m, std::span<const std::size_t> columns) {
  Matrix out(m.rows(), columns.size());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < columns.size(); ++j) out(i, j) = m(i, columns[j]);
  return out;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

std::vector<std::pair<Matrix, Matrix>> batches(const Dataset& ds, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) fail_validation("batches: batch_size must be >= 1");
  const std::vector<std::size_t> order = shuffled_indices(ds.samples(), rng);
  std::vector<std::pair<Matrix, Matrix>> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t len = std::min(batch_size, order.size() - start);
    const std::span<const std::size_t> cols(order.data() + start, len);
    out.emplace_back(gather_columns(ds.inputs, cols), gather_columns(ds.targets, cols));
  }
  return out;
}

std::pair<Matrix, Matrix> BatchStream::next(const Dataset& ds) {
  if (batch_size_ == 0) fail_validation("BatchStream: batch_size must be >= 1");
  if (pos_ >= order_.size()) {
    order_ = shuffled_indices(ds.samples(), rng_);
    pos_ = 0;
  }
  const std::size_t len = std::min(batch_size_, order_.size() - pos_);
  const std::span<const std::size_t> cols(order_.data() + pos_, len);
  pos_ += len;
  return {gather_columns(ds.inputs, cols), gather_columns(ds.targets, cols)};
}

void BatchStream::restore(Rng rng, std::vector<std::size_t> order, std::size_t pos) {
  if (pos > order.size()) fail_validation("BatchStream: position past end of epoch");
  rng_ = rng;
  order_ = std::move(order);
  pos_ = pos;
}

}  // namespace srlora
