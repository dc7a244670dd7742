#pragma once

#include <string_view>

namespace netfex::log {

// Verbosity comes from the NETFEX_LOG environment variable
// (trace|debug|info|warn|error|off, default warn).
void init_from_env();

void debug(std::string_view msg);
void info(std::string_view msg);
void warn(std::string_view msg);
void error(std::string_view msg);

} // namespace netfex::log
