#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace aqsense::cli {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kUsage = 2,
    kValidation = 3,
    kParse = 4,
    kResource = 5,
    kDomain = 6,
    kInsufficientData = 7,
    kDegenerateInput = 8,
};

/// Runs one subcommand. args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace aqsense::cli
