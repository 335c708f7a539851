#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace srlora::cli {

enum ExitCode : int {
  kOk = 0,
  kValidation = 1,
  kRuntime = 2,
  kIo = 3,
};

/// Parses argv (without the program name) and dispatches. Diagnostics go to
/// `err` as a single line; artifact paths and reports go to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int cmd_train(const std::string& config_path, const std::optional<std::string>& out_dir,
              const std::optional<std::uint64_t>& seed, std::ostream& out);
int cmd_verify(const std::string& suite, std::ostream& out);
int cmd_report(const std::string& run_dir, const std::string& kind, std::ostream& out);
int cmd_compare(const std::string& config_a, const std::string& config_b, const std::vector<std::uint64_t>& seeds,
                const std::optional<std::string>& out_dir, std::ostream& out);

}  // namespace srlora::cli
