#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace vict::cli {

/// Runs the command line in-process. Exit codes: 0 success, 1 computation
/// error, 2 input or I/O error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vict::cli
