#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ctxprobe::cli {

/// Process exit codes shared by every subcommand.
enum ExitCode : int {
  kOk = 0,
  kValidationFailure = 1,
  kUsage = 2,
  kIoOrFormat = 3,
  kNonConvergence = 4,
};

inline constexpr const char* kVersion = "1.0.0";

/// Entry point behind the `ctxprobe` binary. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ctxprobe::cli
