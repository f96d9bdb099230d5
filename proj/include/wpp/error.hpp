#pragma once

#include <stdexcept>
#include <string>

namespace wpp {

/// Base of every error raised by the library. `kind()` is a stable short tag
/// used by the CLI for machine-parsable error lines.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& what) : Error("dimension", what) {}
};

struct CapacityError : Error {
  explicit CapacityError(const std::string& what) : Error("capacity", what) {}
};

struct EstimationError : Error {
  explicit EstimationError(const std::string& what) : Error("estimation", what) {}
};

/// PSNR of identical images is infinite; reported as an error, not a number.
struct ZeroMseError : Error {
  explicit ZeroMseError(const std::string& what) : Error("zero_mse", what) {}
};

struct InvalidArgument : Error {
  explicit InvalidArgument(const std::string& what) : Error("invalid_argument", what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error("io", what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

namespace detail {

inline std::string dims_str(long r, long c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace detail
}  // namespace wpp
