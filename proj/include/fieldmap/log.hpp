#pragma once

#include <cstdlib>
#include <iostream>
#include <string_view>

namespace fieldmap {

enum class LogLevel { kError = 0, kInfo = 1, kDebug = 2 };

// Level comes from the FIELDMAP_LOG environment variable ({error,info,debug});
// default is error-only so library output stays quiet in tests.
inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("FIELDMAP_LOG");
    if (env == nullptr) return LogLevel::kError;
    const std::string_view v(env);
    if (v == "debug") return LogLevel::kDebug;
    if (v == "info") return LogLevel::kInfo;
    return LogLevel::kError;
  }();
  return level;
}

inline void log_message(LogLevel level, std::string_view tag, std::string_view msg) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  std::cerr << "[" << tag << "] " << msg << "\n";
}

inline void log_error(std::string_view msg) { log_message(LogLevel::kError, "error", msg); }
inline void log_info(std::string_view msg) { log_message(LogLevel::kInfo, "info", msg); }
inline void log_debug(std::string_view msg) { log_message(LogLevel::kDebug, "debug", msg); }

}  // namespace fieldmap
