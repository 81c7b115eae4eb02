#pragma once

#include <string>
#include <vector>

namespace difr::cli {

/// Runs one command line (args[0] is the program name). Returns the process
/// exit status: 0 on success, nonzero on any error.
int run(const std::vector<std::string>& args);

}  // namespace difr::cli
