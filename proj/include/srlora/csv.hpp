#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace srlora::csv {

/// Shortest representation that round-trips to the same double.
std::string format_double(double x);

/// Splits on ',' with no quoting; fields keep surrounding whitespace.
/// A trailing '\r' is dropped.
std::vector<std::string> split_line(std::string_view line);

/// Full-field parses; throw a validation Error naming `what` on failure.
double parse_double(std::string_view field, const std::string& what);
std::size_t parse_size(std::string_view field, const std::string& what);

}  // namespace srlora::csv
