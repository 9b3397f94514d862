#pragma once

#include <string>
#include <vector>

namespace depkit {

/// Run the depkit CLI on `args` (without the program name).
/// Exit codes: 0 success, 1 gate findings (counterexample, monitor warning,
/// coverage below --min-coverage), 2 usage or input errors (machine-readable
/// error JSON on stderr).
int run_cli(std::vector<std::string> args);

} // namespace depkit
