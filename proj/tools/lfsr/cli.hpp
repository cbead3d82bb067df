#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lfsr::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kData = 3,
  kDivergence = 4,
};

// Runs one command line (args exclude the program name). Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lfsr::cli
