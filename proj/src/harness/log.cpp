#include "weaknet/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>

namespace weaknet {
namespace {

LogLevel initial_level() {
  const char* env = std::getenv("WEAKNET_LOG");
  if (!env) return LogLevel::info;
  const std::string v = env;
  if (v == "debug") return LogLevel::debug;
  if (v == "warning") return LogLevel::warning;
  if (v == "error") return LogLevel::error;
  if (v == "off") return LogLevel::off;
  return LogLevel::info;
}

std::atomic<LogLevel>& level_ref() {
  static std::atomic<LogLevel> level{initial_level()};
  return level;
}

}  // namespace

void set_log_level(LogLevel level) { level_ref() = level; }
LogLevel log_level() { return level_ref(); }

void log_message(LogLevel level, const std::string& message) {
  if (level < level_ref().load()) return;
  static std::mutex mu;
  static constexpr const char* names[] = {"debug", "info", "warning", "error"};
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << "[" << names[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace weaknet
