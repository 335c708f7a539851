#include <doctest.h>

#include <set>
#include <sstream>

#include "srlora/data.hpp"
#include "srlora/error.hpp"

using namespace srlora;

namespace {

CsvSchema schema(std::vector<std::string> features = {"x1", "x2"}, std::string label = "y") {
  CsvSchema s;
  s.feature_columns = std::move(features);
  s.label_column = std::move(label);
  return s;
}

std::string error_of(const std::string& text, const CsvSchema& s) {
  std::istringstream in(text);
  try {
    parse_csv(in, s);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

Dataset indexed(std::size_t n) {
  Dataset ds;
  ds.inputs = Matrix(1, n);
  ds.targets = Matrix(1, n);
  for (std::size_t j = 0; j < n; ++j) ds.inputs(0, j) = static_cast<double>(j);
  return ds;
}

}  // namespace

TEST_CASE("gen_teacher_student: exact teacher and determinism") {
  TeacherSpec spec = make_teacher(4, 3, 2, 1.0, 1.0, 0.0, 5);
  spec.delta_star.fill(0.0);
  const Dataset ds = gen_teacher_student(spec, 20);
  CHECK(ds.targets == matmul(spec.w0, ds.inputs));
  CHECK(ds.kind == TaskKind::regression);

  const TeacherSpec s2 = make_teacher(6, 5, 2, 1.0, 1.0, 0.1, 9);
  CHECK(gen_teacher_student(s2, 10).targets == gen_teacher_student(s2, 10).targets);
  CHECK_THROWS_AS(gen_teacher_student(s2, 0), Error);
}

TEST_CASE("make_teacher: hidden update has exactly rank k*") {
  for (std::size_t k : {1u, 4u, 16u}) {
    const TeacherSpec spec = make_teacher(32, 32, k, 0.2, 1.0, 0.0, 100 + k);
    CHECK(numerical_rank(spec.delta_star, 1e-10) == k);
  }
}

TEST_CASE("parse_csv: two rows, two labels") {
  std::istringstream in("x1,x2,y\n1.5,2,a\n-3,4e-1,b\n");
  const Dataset ds = parse_csv(in, schema());
  CHECK(ds.inputs == Matrix{{1.5, -3}, {2, 0.4}});
  CHECK(ds.targets == Matrix::identity(2));
  CHECK(ds.labels == std::vector<std::string>{"a", "b"});
  CHECK(ds.kind == TaskKind::classification);
}

TEST_CASE("parse_csv: column order follows the header, labels by first appearance") {
  std::istringstream in("y,x2,skip,x1\nb,1,9,2\na,3,9,4\nb,5,9,6\n");
  const Dataset ds = parse_csv(in, schema());
  CHECK(ds.inputs == Matrix{{2, 4, 6}, {1, 3, 5}});
  CHECK(ds.labels == std::vector<std::string>{"b", "a"});
  CHECK(ds.targets == Matrix{{1, 0, 1}, {0, 1, 0}});
}

TEST_CASE("parse_csv: rejected inputs carry line numbers") {
  CHECK(error_of("x1,x2,y\n", schema()).find("no data") != std::string::npos);
  CHECK(error_of("", schema()) != "");
  CHECK(error_of("x1,x2,y\n1,2,a\n1,zz,b\n", schema()).find("line 3") != std::string::npos);
  CHECK(error_of("x1,x2,y\n1,2,a\n1,2\n", schema()).find("line 3") != std::string::npos);
  CHECK(error_of("x1,x2,y\n\"1\",2,a\n", schema()).find("line 2") != std::string::npos);
  CHECK(error_of("x1,y\n1,a\n", schema()).find("x2") != std::string::npos);
}

TEST_CASE("load_csv: missing file is an io error") {
  CsvSchema s = schema();
  s.path = "/nonexistent/data.csv";
  try {
    load_csv(s);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::io);
    CHECK(std::string(e.what()).find("/nonexistent/data.csv") != std::string::npos);
  }
}

TEST_CASE("csv round trip") {
  Rng rng(3);
  Dataset ds;
  ds.inputs = gaussian(rng, 3, 40, 0.0, 10.0);
  ds.targets = Matrix(4, 40);
  ds.kind = TaskKind::classification;
  ds.labels = {"cat", "dog", "eel", "fox"};
  for (std::size_t j = 0; j < 40; ++j) ds.targets(j < 4 ? j : rng.below(4), j) = 1.0;
  std::stringstream buf;
  write_csv(buf, ds, {"f0", "f1", "f2"}, "label");
  const Dataset back = parse_csv(buf, schema({"f0", "f1", "f2"}, "label"));
  CHECK(relative_error(back.inputs, ds.inputs, ds.inputs) <= 1e-12);
  CHECK(back.targets == ds.targets);
  CHECK(back.labels == ds.labels);
}

TEST_CASE("batches: coverage and determinism") {
  const Dataset ds = indexed(23);
  Rng rng(4);
  const auto one = batches(ds, 100, rng);
  REQUIRE(one.size() == 1);
  CHECK(one[0].first.cols() == 23);

  const auto singles = batches(ds, 1, rng);
  CHECK(singles.size() == 23);

  for (std::size_t bs : {1u, 4u, 5u, 23u}) {
    const auto epoch = batches(ds, bs, rng);
    std::multiset<double> seen;
    for (const auto& [x, y] : epoch) {
      CHECK(x.cols() <= bs);
      for (std::size_t j = 0; j < x.cols(); ++j) seen.insert(x(0, j));
    }
    CHECK(seen.size() == 23);
    CHECK(std::set<double>(seen.begin(), seen.end()).size() == 23);
  }

  Rng a(9), b(9);
  const auto ea = batches(ds, 5, a);
  const auto eb = batches(ds, 5, b);
  REQUIRE(ea.size() == eb.size());
  for (std::size_t i = 0; i < ea.size(); ++i) CHECK(ea[i].first == eb[i].first);
  CHECK_THROWS_AS(batches(ds, 0, a), Error);
}

TEST_CASE("BatchStream: epochs cover every sample and state restores") {
  const Dataset ds = indexed(10);
  BatchStream s(4, Rng(5));
  for (int epoch = 0; epoch < 3; ++epoch) {
    std::set<double> seen;
    for (int b = 0; b < 3; ++b) {
      const auto [x, y] = s.next(ds);
      for (std::size_t j = 0; j < x.cols(); ++j) seen.insert(x(0, j));
    }
    CHECK(seen.size() == 10);
  }
  BatchStream copy(4, Rng());
  copy.restore(s.rng(), s.order(), s.position());
  for (int b = 0; b < 7; ++b) CHECK(copy.next(ds).first == s.next(ds).first);
}

TEST_CASE("shuffled_indices is a permutation") {
  Rng rng(6);
  auto p = shuffled_indices(50, rng);
  std::sort(p.begin(), p.end());
  for (std::size_t i = 0; i < 50; ++i) CHECK(p[i] == i);
}
