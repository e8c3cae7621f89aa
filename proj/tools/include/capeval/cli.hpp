#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "capeval/error.hpp"

namespace capeval::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitData = 3,
  kExitBackend = 4,
  kExitEnvironment = 5,
};

inline constexpr std::uint64_t kDefaultSeed = 17;
inline constexpr std::string_view kToolVersion = "0.1.0";

int exit_code_for(Errc code);

/// Runs one command line; args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

/// Makes a running `elo serve` shut down; safe from signal handlers.
void request_stop();

}  // namespace capeval::cli
