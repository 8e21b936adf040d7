#pragma once

#include <atomic>
#include <functional>
#include <iostream>
#include <mutex>
#include <string>

namespace wfda {

namespace detail {

inline std::atomic<int>& warning_suppression() {
  static std::atomic<int> depth{0};
  return depth;
}

inline std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

inline std::function<void(const std::string&)>& warning_sink() {
  static std::function<void(const std::string&)> sink = [](const std::string& msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return sink;
}

}  // namespace detail

/// Replace the destination of library warnings (stderr by default).
inline void set_warning_sink(std::function<void(const std::string&)> sink) {
  std::lock_guard lock(detail::sink_mutex());
  detail::warning_sink() = std::move(sink);
}

inline void warn(const std::string& msg) {
  if (detail::warning_suppression().load() > 0) return;
  std::lock_guard lock(detail::sink_mutex());
  if (detail::warning_sink()) detail::warning_sink()(msg);
}

/// Silences warnings for its lifetime. Used inside cross-validation loops,
/// where per-fold truncation notices would flood the output.
class ScopedWarningSilencer {
 public:
  ScopedWarningSilencer() { ++detail::warning_suppression(); }
  ~ScopedWarningSilencer() { --detail::warning_suppression(); }
  ScopedWarningSilencer(const ScopedWarningSilencer&) = delete;
  ScopedWarningSilencer& operator=(const ScopedWarningSilencer&) = delete;
};

}  // namespace wfda
