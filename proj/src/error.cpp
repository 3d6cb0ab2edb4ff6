#include "tagteam/error.hpp"

namespace tagteam {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid-input";
    case ErrorKind::Encoding: return "encoding";
    case ErrorKind::Protocol: return "protocol";
    case ErrorKind::Session: return "session";
    case ErrorKind::Routing: return "routing";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::StalePose: return "stale-pose";
    case ErrorKind::MissionViolation: return "protocol-violation";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Config: return "config";
    case ErrorKind::Runtime: return "runtime";
  }
  return "unknown";
}

}  // namespace tagteam
