#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stochpool {

enum class ErrorKind {
  kInvalidShape,
  kDegenerateInput,
  kInvalidProbability,
  kEmptySubsample,
  kInvalidPattern,
  kUnsupportedConfiguration,
  kInvalidPooling,
  kInvalidInput,
  kShapeMismatch,
  kStaleCache,
  kInvalidConfig,
  kTrainingFailure,
  kIo,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidShape: return "invalid-shape";
    case ErrorKind::kDegenerateInput: return "degenerate-input";
    case ErrorKind::kInvalidProbability: return "invalid-probability";
    case ErrorKind::kEmptySubsample: return "empty-subsample";
    case ErrorKind::kInvalidPattern: return "invalid-pattern";
    case ErrorKind::kUnsupportedConfiguration: return "unsupported-configuration";
    case ErrorKind::kInvalidPooling: return "invalid-pooling";
    case ErrorKind::kInvalidInput: return "invalid-input";
    case ErrorKind::kShapeMismatch: return "shape-mismatch";
    case ErrorKind::kStaleCache: return "stale-cache";
    case ErrorKind::kInvalidConfig: return "invalid-config";
    case ErrorKind::kTrainingFailure: return "training-failure";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

/// All library failures are reported through this type; `kind()` is stable
/// and meant for programmatic dispatch, `what()` for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

namespace detail {

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) throw Error(kind, message);
}

inline void check_keep_prob(double p) {
  // written so that NaN fails too
  if (!(p > 0.0 && p <= 1.0)) {
    throw Error(ErrorKind::kInvalidProbability,
                "keep probability must lie in (0, 1], got " + std::to_string(p));
  }
}

}  // namespace detail
}  // namespace stochpool
