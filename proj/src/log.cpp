#include "mmbo/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace mmbo::log {

static Level parse_env() {
  const char* v = std::getenv("MMBO_LOG");
  if (v == nullptr) return Level::error;
  if (std::strcmp(v, "debug") == 0) return Level::debug;
  if (std::strcmp(v, "info") == 0) return Level::info;
  return Level::error;
}

Level threshold() {
  static const Level cached = parse_env();
  return cached;
}

bool enabled(Level level) { return static_cast<int>(level) <= static_cast<int>(threshold()); }

void write(Level level, const std::string& message) {
  if (!enabled(level)) return;
  const char* tag = level == Level::error ? "error" : (level == Level::info ? "info" : "debug");
  std::fprintf(stderr, "[mmbo %s] %s\n", tag, message.c_str());
}

}  // namespace mmbo::log
