#pragma once

#include <stdexcept>
#include <string>

namespace food4all {

enum class ErrorCode {
  kInvalidArgument,
  kPrecondition,
  kEmptyAnswer,
  kParse,
  kUndefinedMetric,
  kNotFound,
  kToolNotFound,
  kDuplicate,
  kConflict,
  kTransport,
  kProtocol,
  kIo,
  kRejected,
};

const char* to_string(ErrorCode code);

// Single exception type for the library. `detail` carries the raw payload
// when one exists (malformed judge JSON, HTTP body, offending line).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string detail = {}, int http_status = 0)
      : std::runtime_error(message), code_(code), detail_(std::move(detail)), http_status_(http_status) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }
  int http_status() const noexcept { return http_status_; }

 private:
  ErrorCode code_;
  std::string detail_;
  int http_status_;
};

}  // namespace food4all
