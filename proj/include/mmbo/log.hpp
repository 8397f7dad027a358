#pragma once

#include <sstream>
#include <string>

// Diagnostic logging to stderr, gated by the MMBO_LOG environment variable
// (one of "error", "info", "debug"; default "error"). Unknown values fall
// back to "error".
namespace mmbo::log {

enum class Level { error = 0, info = 1, debug = 2 };

Level threshold();
bool enabled(Level level);
void write(Level level, const std::string& message);

template <typename... Args>
void info(const Args&... args) {
  if (!enabled(Level::info)) return;
  std::ostringstream os;
  (os << ... << args);
  write(Level::info, os.str());
}

template <typename... Args>
void debug(const Args&... args) {
  if (!enabled(Level::debug)) return;
  std::ostringstream os;
  (os << ... << args);
  write(Level::debug, os.str());
}

template <typename... Args>
void error(const Args&... args) {
  std::ostringstream os;
  (os << ... << args);
  write(Level::error, os.str());
}

}  // namespace mmbo::log
