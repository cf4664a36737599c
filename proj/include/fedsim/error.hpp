#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fedsim {

enum class ErrorKind {
  kInvalidArchitecture,
  kShape,
  kInvalidLabel,
  kNumerical,
  kEmptyClient,
  kEmptyDataset,
  kParse,
  kFormat,
  kStratification,
  kTooManyClients,
  kMerge,
  kInvalidInput,
  kEncodingRange,
  kProtocol,
  kIo,
};

std::string_view to_string(ErrorKind kind);

// Every failure surfaced by the library carries a kind so callers (the
// harness in particular) can classify it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArchitecture: return "invalid architecture";
    case ErrorKind::kShape: return "shape error";
    case ErrorKind::kInvalidLabel: return "invalid label";
    case ErrorKind::kNumerical: return "numerical error";
    case ErrorKind::kEmptyClient: return "empty client";
    case ErrorKind::kEmptyDataset: return "empty dataset";
    case ErrorKind::kParse: return "parse error";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kStratification: return "stratification error";
    case ErrorKind::kTooManyClients: return "too many clients";
    case ErrorKind::kMerge: return "merge error";
    case ErrorKind::kInvalidInput: return "invalid input";
    case ErrorKind::kEncodingRange: return "encoding range error";
    case ErrorKind::kProtocol: return "protocol error";
    case ErrorKind::kIo: return "io error";
  }
  return "error";
}

}  // namespace fedsim
