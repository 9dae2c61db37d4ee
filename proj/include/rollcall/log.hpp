#pragma once

#include <atomic>
#include <iostream>
#include <mutex>
#include <string_view>

namespace rollcall {

enum class LogLevel { kQuiet = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

inline std::atomic<LogLevel>& log_level() {
  static std::atomic<LogLevel> level{LogLevel::kWarn};
  return level;
}

/// One line to stderr, tagged with the component name.
inline void log(LogLevel level, std::string_view component, std::string_view message) {
  if (level > log_level().load(std::memory_order_relaxed)) return;
  static std::mutex mu;
  std::lock_guard lock(mu);
  std::cerr << '[' << component << "] " << message << '\n';
}

}  // namespace rollcall
