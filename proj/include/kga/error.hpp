#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace kga {

enum class ErrorKind {
  kShapeMismatch,
  kInvalidArgument,
  kNonScalarBackward,
  kGraphCycle,
  kNonFinite,
  kFormat,
  kIo,
  kConfig,
  kPlacement,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library. Carries a machine-readable kind and,
/// for stream parsing and row-oriented input, the byte offset or row number.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message,
        std::optional<std::uint64_t> offset = std::nullopt);

  ErrorKind kind() const noexcept { return kind_; }
  std::optional<std::uint64_t> offset() const noexcept { return offset_; }

  /// Single line: `error kind=<kind> [offset=<n>] message="<text>"`.
  std::string one_line() const;

 private:
  ErrorKind kind_;
  std::optional<std::uint64_t> offset_;
};

}  // namespace kga
