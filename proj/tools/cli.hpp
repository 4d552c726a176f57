#pragma once

#include <ostream>

namespace sls::cli {

// Stable exit codes.
enum ExitCode : int {
    kOk = 0,
    kInfeasible = 2,     // synthesis infeasible, or verify found a violated constraint
    kSolverFailure = 3,  // LP did not converge, or a simulation diverged
    kIoError = 4,        // unreadable files, malformed data, schema violations
};

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sls::cli
