#include "qmcast/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace qmcast {

LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("QMCAST_LOG");
    if (!env) return LogLevel::error;
    if (std::strcmp(env, "debug") == 0) return LogLevel::debug;
    if (std::strcmp(env, "info") == 0) return LogLevel::info;
    return LogLevel::error;
  }();
  return level;
}

void log_message(LogLevel level, const std::string& message) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  const char* tag = level == LogLevel::error ? "error"
                    : level == LogLevel::info ? "info"
                                              : "debug";
  std::fprintf(stderr, "qmcast [%s] %s\n", tag, message.c_str());
}

}  // namespace qmcast
