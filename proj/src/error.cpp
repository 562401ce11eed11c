#include "realsub/error.hpp"

namespace realsub {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return "config";
    case ErrorKind::InputData: return "input-data";
    case ErrorKind::ExternalService: return "external-service";
    case ErrorKind::Invariant: return "invariant";
  }
  return "unknown";
}

}  // namespace realsub
