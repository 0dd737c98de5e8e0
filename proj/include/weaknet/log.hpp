#pragma once

#include <string>

namespace weaknet {

enum class LogLevel { debug, info, warning, error, off };

/// Process-wide threshold; initialised from WEAKNET_LOG (debug|info|warning|error|off).
void set_log_level(LogLevel level);
LogLevel log_level();

void log_message(LogLevel level, const std::string& message);
inline void log_info(const std::string& m) { log_message(LogLevel::info, m); }
inline void log_warning(const std::string& m) { log_message(LogLevel::warning, m); }
inline void log_debug(const std::string& m) { log_message(LogLevel::debug, m); }

}  // namespace weaknet
