#include "capeval/error.hpp"

namespace capeval {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::kDimension: return "dimension";
    case Errc::kRange: return "range";
    case Errc::kTooFewTokens: return "too-few-tokens";
    case Errc::kDegenerateKey: return "degenerate-key";
    case Errc::kDomain: return "domain";
    case Errc::kConfiguration: return "configuration";
    case Errc::kTransport: return "transport";
    case Errc::kRequest: return "request";
    case Errc::kProtocol: return "protocol";
    case Errc::kExtraction: return "extraction";
    case Errc::kJudging: return "judging";
    case Errc::kConstruction: return "construction";
    case Errc::kValidation: return "validation";
    case Errc::kNoData: return "no-data";
    case Errc::kUndefinedCorrelation: return "undefined-correlation";
    case Errc::kNotFound: return "not-found";
    case Errc::kConflict: return "conflict";
    case Errc::kIo: return "io";
    case Errc::kEnvironment: return "environment";
  }
  return "unknown";
}

}  // namespace capeval
