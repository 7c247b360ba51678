#pragma once

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <string_view>

namespace mfgham::log {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

/// Verbosity comes from MFGHAM_LOG (error|info|debug); warnings are shown at
/// the default level.
inline Level threshold() {
  static const Level level = [] {
    const char* env = std::getenv("MFGHAM_LOG");
    const std::string_view v = env ? env : "";
    if (v == "error") return Level::error;
    if (v == "info") return Level::info;
    if (v == "debug") return Level::debug;
    return Level::warn;
  }();
  return level;
}

inline bool enabled(Level level) { return level <= threshold(); }

template <class... Args>
void write(Level level, const Args&... args) {
  if (!enabled(level)) return;
  static std::mutex mutex;
  std::ostringstream os;
  static constexpr const char* tags[] = {"error", "warn", "info", "debug"};
  os << "[mfgham " << tags[static_cast<int>(level)] << "] ";
  (os << ... << args);
  os << '\n';
  std::lock_guard lock(mutex);
  std::cerr << os.str();
}

template <class... Args> void error(const Args&... a) { write(Level::error, a...); }
template <class... Args> void warn(const Args&... a) { write(Level::warn, a...); }
template <class... Args> void info(const Args&... a) { write(Level::info, a...); }
template <class... Args> void debug(const Args&... a) { write(Level::debug, a...); }

}  // namespace mfgham::log
