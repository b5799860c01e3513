#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hazelab {

enum ExitCode : int {
    exit_ok = 0,
    exit_failure = 1,
    exit_config = 2,
    exit_io = 3,
    exit_numeric = 4,
};

// The `hazelab` command line: synth, train, eval, dehaze, gradcheck.
// args excludes the program name. Library errors become exit codes with the
// message on err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hazelab
