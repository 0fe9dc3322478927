#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sidx::cli {

// Runs one command line (args[0] is the program name). Returns the exit
// status; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sidx::cli
