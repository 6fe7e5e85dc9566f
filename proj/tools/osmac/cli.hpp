#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace osmac::cli {

enum ExitCode : int { kOk = 0, kInputError = 2, kEstimationError = 3, kVerificationFailed = 4 };

/// Parses and runs one command line. Results go to --out when given and to
/// `out` otherwise; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, char** argv);

}  // namespace osmac::cli
