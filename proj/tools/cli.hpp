#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace aawr::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kVerifyFailed = 3, kRuntimeError = 4 };

/// Entry point shared by the executable and the tests. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace aawr::cli
