#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace uavmec {

/// Horizontal (x, y) position in meters.
using Vec2 = Eigen::Vector2d;

/**
 * UAV trajectory with N+1 waypoints stored column-wise. Column n (0-based) is
 * the position held during slot n; column N is the final position q_F.
 */
using Trajectory = Eigen::Matrix2Xd;

enum class ErrorKind {
  invalid_argument,
  dimension_mismatch,
  out_of_range,
  infeasible,
  iteration_limit,
  parse_error,
  io_error,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument:
      return "invalid argument";
    case ErrorKind::dimension_mismatch:
      return "dimension mismatch";
    case ErrorKind::out_of_range:
      return "out of range";
    case ErrorKind::infeasible:
      return "infeasible";
    case ErrorKind::iteration_limit:
      return "iteration limit";
    case ErrorKind::parse_error:
      return "parse error";
    case ErrorKind::io_error:
      return "io error";
  }
  return "unknown";
}

}  // namespace uavmec
