#pragma once

#include <string_view>

namespace critpath {

enum class LogLevel { Quiet, Warn, Info };

void set_log_level(LogLevel level);
LogLevel log_level();

void log_warn(std::string_view msg);
void log_info(std::string_view msg);

}  // namespace critpath
