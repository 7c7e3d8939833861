#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace rdistill::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kPrecondition = 2, kVerifyFailed = 3 };

/// Parses `args` (without the program name) and runs the chosen subcommand.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rdistill::cli
