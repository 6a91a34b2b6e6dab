#pragma once

namespace qg {

// Runs one CLI invocation. Exit codes: 0 success, 2 usage error,
// 3 missing/invalid input, 4 contract violation, 1 unexpected failure.
int run_cli(int argc, const char* const* argv);

}  // namespace qg
