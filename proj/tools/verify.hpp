#pragma once

#include <string>
#include <vector>

namespace srlora::verify {

struct PropertyResult {
  std::string suite;
  std::string name;
  bool passed = false;
  std::string detail;
};

/// svd, gradients, preservation, schedule (and "all").
const std::vector<std::string>& suite_names();

/// Runs one suite, or every suite for "all", with fixed seeds. Throws a
/// validation Error for an unknown name.
std::vector<PropertyResult> run_suite(const std::string& name);

}  // namespace srlora::verify
