#pragma once

#include <fmt/core.h>

#include <atomic>
#include <cstdio>
#include <utility>

namespace eeknn::log {

inline std::atomic<int>& verbosity() {
  static std::atomic<int> level{1};
  return level;
}

inline void set_verbosity(int level) { verbosity() = level; }

template <typename... Args>
void info(fmt::format_string<Args...> f, Args&&... args) {
  if (verbosity() >= 1) fmt::print(stderr, "[info] {}\n", fmt::format(f, std::forward<Args>(args)...));
}

template <typename... Args>
void warn(fmt::format_string<Args...> f, Args&&... args) {
  if (verbosity() >= 0) fmt::print(stderr, "[warn] {}\n", fmt::format(f, std::forward<Args>(args)...));
}

}  // namespace eeknn::log
