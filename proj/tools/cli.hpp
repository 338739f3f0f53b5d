#pragma once

#include <ostream>

namespace cpdp::cli {

// Parses `cpdp <command> --config <path> [--mode m] [--seed n] [--out dir]`,
// runs the command and returns the process exit status. Failures print a
// single "error <CODE>: <message>" line to err.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cpdp::cli
