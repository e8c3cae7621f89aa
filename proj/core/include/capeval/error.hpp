#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace capeval {

enum class Errc {
  kDimension,
  kRange,
  kTooFewTokens,
  kDegenerateKey,
  kDomain,
  kConfiguration,
  kTransport,
  kRequest,
  kProtocol,
  kExtraction,
  kJudging,
  kConstruction,
  kValidation,
  kNoData,
  kUndefinedCorrelation,
  kNotFound,
  kConflict,
  kIo,
  kEnvironment,
};

std::string_view to_string(Errc code);

/// Single exception type for the library; `code()` carries the category.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace capeval
