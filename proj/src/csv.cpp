#include "srlora/csv.hpp"

#include <array>
#include <charconv>
#include <cmath>

#include "srlora/error.hpp"

namespace srlora::csv {

std::string format_double(double x) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), res.ptr);
}

std::vector<std::string> split_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.emplace_back(line.substr(start));
      break;
    }
    fields.emplace_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

}  // namespace

double parse_double(std::string_view field, const std::string& what) {
  const std::string_view f = trim(field);
  double value = 0.0;
  const auto res = std::from_chars(f.data(), f.data() + f.size(), value);
  if (f.empty() || res.ec != std::errc() || res.ptr != f.data() + f.size() || !std::isfinite(value)) {
    fail_validation(what + ": cannot parse '" + std::string(field) + "' as a finite real");
  }
  return value;
}

std::size_t parse_size(std::string_view field, const std::string& what) {
  const std::string_view f = trim(field);
  std::size_t value = 0;
  const auto res = std::from_chars(f.data(), f.data() + f.size(), value);
  if (f.empty() || res.ec != std::errc() || res.ptr != f.data() + f.size()) {
    fail_validation(what + ": cannot parse '" + std::string(field) + "' as a non-negative integer");
  }
  return value;
}

}  // namespace srlora::csv
