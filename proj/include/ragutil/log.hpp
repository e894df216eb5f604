#pragma once

#include <cstddef>
#include <string_view>

#include <fmt/core.h>

namespace ragutil::log {

void warn_message(std::string_view message);
void info_message(std::string_view message);

// Process-wide count of warnings emitted; tests use it to observe warn paths.
std::size_t warning_count();

template <typename... Args>
void warn(fmt::format_string<Args...> format, Args&&... args) {
  warn_message(fmt::format(format, std::forward<Args>(args)...));
}

template <typename... Args>
void info(fmt::format_string<Args...> format, Args&&... args) {
  info_message(fmt::format(format, std::forward<Args>(args)...));
}

void set_quiet(bool quiet);

}  // namespace ragutil::log
