#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tokswap {

enum class ErrorKind {
  kInvalidUtf8,
  kInvalidArgument,
  kTargetTooSmall,
  kUnknownSymbol,
  kIdOutOfRange,
  kEmptyText,
  kMixedTexts,
  kTokenizerLoad,
  kEmptyInput,
  kNoOverlap,
  kDimensionMismatch,
  kUndecomposableToken,
  kMissingAuxVector,
  kCorpusTooSmall,
  kHashMismatch,
  kZeroLayers,
  kFormat,
  kIo,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidUtf8: return "InvalidUtf8";
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kTargetTooSmall: return "TargetTooSmall";
    case ErrorKind::kUnknownSymbol: return "UnknownSymbol";
    case ErrorKind::kIdOutOfRange: return "IdOutOfRange";
    case ErrorKind::kEmptyText: return "EmptyText";
    case ErrorKind::kMixedTexts: return "MixedTexts";
    case ErrorKind::kTokenizerLoad: return "TokenizerLoadError";
    case ErrorKind::kEmptyInput: return "EmptyInput";
    case ErrorKind::kNoOverlap: return "NoOverlap";
    case ErrorKind::kDimensionMismatch: return "DimensionMismatch";
    case ErrorKind::kUndecomposableToken: return "UndecomposableToken";
    case ErrorKind::kMissingAuxVector: return "MissingAuxVector";
    case ErrorKind::kCorpusTooSmall: return "CorpusTooSmall";
    case ErrorKind::kHashMismatch: return "HashMismatch";
    case ErrorKind::kZeroLayers: return "ZeroLayers";
    case ErrorKind::kFormat: return "FormatError";
    case ErrorKind::kIo: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), message_(message) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// The message without the kind prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorKind kind_;
  std::string message_;
};

}  // namespace tokswap
