#pragma once

#include <functional>
#include <string>

namespace srlora {

using WarningSink = std::function<void(const std::string&)>;

/// Replaces the warning sink (default: "warning: <msg>" on stderr). Passing
/// an empty function silences warnings. Returns the previous sink.
WarningSink set_warning_sink(WarningSink sink);

void log_warning(const std::string& message);

}  // namespace srlora
