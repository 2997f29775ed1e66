#include "log.hpp"

#include "headlock/errors.hpp"

namespace headlock::cli {

LogLevel& log_level() {
    static LogLevel level = LogLevel::info;
    return level;
}

LogLevel log_level_from_string(const std::string& name) {
    if (name == "debug") return LogLevel::debug;
    if (name == "info") return LogLevel::info;
    if (name == "warn") return LogLevel::warn;
    if (name == "error") return LogLevel::error;
    throw ConfigError("unknown log level '" + name + "'");
}

}  // namespace headlock::cli
