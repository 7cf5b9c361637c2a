#pragma once

#include <Eigen/Core>
#include <sstream>
#include <stdexcept>
#include <string>

namespace weaksurg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Invalid configuration (bad shapes, out-of-range values, incompatible state).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Filesystem / serialization failure; message names the offending path.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite values where finite ones are required.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Unreadable or wrong-version checkpoint payloads.
struct CheckpointFormatError : IoError {
  explicit CheckpointFormatError(const std::string& msg) : IoError(msg) {}
};

namespace detail {
inline void strcat_impl(std::ostringstream&) {}
template <typename T, typename... Rest>
void strcat_impl(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  strcat_impl(os, rest...);
}
}  // namespace detail

template <typename... Args>
std::string strcat(const Args&... args) {
  std::ostringstream os;
  detail::strcat_impl(os, args...);
  return os.str();
}

template <typename... Args>
void check_config(bool cond, const Args&... args) {
  if (!cond) throw ConfigError(strcat(args...));
}

template <typename... Args>
void check_io(bool cond, const Args&... args) {
  if (!cond) throw IoError(strcat(args...));
}

}  // namespace weaksurg
