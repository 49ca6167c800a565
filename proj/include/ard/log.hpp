#pragma once

// Minimal stderr logger; verbosity from ARD_LOG={error,info,debug}.

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <string_view>

namespace ard::log {

enum class Level { Error = 0, Info = 1, Debug = 2 };

inline Level level_from_env() {
  const char* v = std::getenv("ARD_LOG");
  if (v == nullptr) return Level::Info;
  std::string_view s(v);
  if (s == "error") return Level::Error;
  if (s == "debug") return Level::Debug;
  return Level::Info;
}

inline Level& threshold() {
  static Level level = level_from_env();
  return level;
}

template <typename... Args>
void write(Level lvl, std::string_view tag, const Args&... args) {
  if (static_cast<int>(lvl) > static_cast<int>(threshold())) return;
  std::ostringstream oss;
  oss << '[' << tag << "] ";
  (oss << ... << args);
  oss << '\n';
  std::cerr << oss.str();
}

template <typename... Args>
void error(const Args&... args) { write(Level::Error, "error", args...); }
template <typename... Args>
void info(const Args&... args) { write(Level::Info, "info", args...); }
template <typename... Args>
void debug(const Args&... args) { write(Level::Debug, "debug", args...); }

}  // namespace ard::log
