#pragma once

#include <iosfwd>

namespace clarinet::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2 };

/// Verbs: prepare, train, verify, eval. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace clarinet::cli
