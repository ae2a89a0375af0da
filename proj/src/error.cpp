#include "kga/error.hpp"

#include <sstream>

namespace kga {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kShapeMismatch: return "shape_mismatch";
    case ErrorKind::kInvalidArgument: return "invalid_argument";
    case ErrorKind::kNonScalarBackward: return "non_scalar_backward";
    case ErrorKind::kGraphCycle: return "graph_cycle";
    case ErrorKind::kNonFinite: return "non_finite";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kPlacement: return "placement";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message, std::optional<std::uint64_t> offset)
    : std::runtime_error(message), kind_(kind), offset_(offset) {}

std::string Error::one_line() const {
  std::ostringstream os;
  os << "error kind=" << to_string(kind_);
  if (offset_) os << " offset=" << *offset_;
  os << " message=\"";
  for (char c : std::string_view(what())) {
    if (c == '\n') {
      os << ' ';
    } else if (c == '"') {
      os << '\'';
    } else {
      os << c;
    }
  }
  os << '"';
  return os.str();
}

}  // namespace kga
