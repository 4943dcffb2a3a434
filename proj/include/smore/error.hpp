#pragma once

#include <stdexcept>
#include <string>

namespace smore {

// Input data problems (malformed files, missing rows, bad ids).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad configuration or CLI arguments.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values where finite ones are required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dimension/contract violations between tensors and ops.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Error = 3 };

void set_log_level(LogLevel level);
LogLevel log_level();
void log_message(LogLevel level, const std::string& msg);

inline void log_debug(const std::string& msg) { log_message(LogLevel::Debug, msg); }
inline void log_info(const std::string& msg) { log_message(LogLevel::Info, msg); }
inline void log_warn(const std::string& msg) { log_message(LogLevel::Warn, msg); }
inline void log_error(const std::string& msg) { log_message(LogLevel::Error, msg); }

}  // namespace smore
