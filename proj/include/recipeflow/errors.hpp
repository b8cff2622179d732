#pragma once

#include <stdexcept>
#include <string>

namespace recipeflow {

// All library errors carry a stable machine-readable code. The CLI prints
// "<code>: <message>" on stderr and exits nonzero.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& msg)
      : std::runtime_error(msg), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

struct ParseError : Error {
  explicit ParseError(const std::string& m) : Error("E_PARSE", m) {}
};
struct ValidationError : Error {
  explicit ValidationError(const std::string& m) : Error("E_VALIDATION", m) {}
};
struct ArgumentError : Error {
  explicit ArgumentError(const std::string& m) : Error("E_ARGS", m) {}
};
struct ShapeError : Error {
  explicit ShapeError(const std::string& m) : Error("E_SHAPE", m) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error("E_CONFIG", m) {}
};
struct IoError : Error {
  explicit IoError(const std::string& m) : Error("E_IO", m) {}
};
struct DataError : Error {
  explicit DataError(const std::string& m) : Error("E_DATA", m) {}
};
struct TrainError : Error {
  explicit TrainError(const std::string& m) : Error("E_TRAIN", m) {}
};

}  // namespace recipeflow
