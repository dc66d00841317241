#pragma once

#include <iosfwd>

namespace pplw {

/// Exit codes.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kDataError = 3,
  kNumericalError = 4,
};

/// The pplw command line: fit, predict, diagnose, demo-branching, lift.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pplw
