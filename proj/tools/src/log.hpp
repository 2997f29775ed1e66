#pragma once

#include <cstdio>
#include <string>

namespace headlock::cli {

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3 };

LogLevel& log_level();
LogLevel log_level_from_string(const std::string& name);

inline void log_at(LogLevel level, const char* tag, const std::string& message) {
    if (level < log_level()) return;
    std::fprintf(stderr, "[%s] %s\n", tag, message.c_str());
}

inline void log_debug(const std::string& m) { log_at(LogLevel::debug, "debug", m); }
inline void log_info(const std::string& m) { log_at(LogLevel::info, "info", m); }
inline void log_warn(const std::string& m) { log_at(LogLevel::warn, "warn", m); }

}  // namespace headlock::cli
