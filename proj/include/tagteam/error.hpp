#pragma once

#include <stdexcept>
#include <string>

namespace tagteam {

enum class ErrorKind {
  InvalidInput,
  Encoding,
  Protocol,
  Session,
  Routing,
  Validation,
  StalePose,
  MissionViolation,
  Parse,
  Config,
  Runtime,
};

const char* to_string(ErrorKind kind) noexcept;

/// Single exception type for the library; `kind()` discriminates the failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace tagteam
