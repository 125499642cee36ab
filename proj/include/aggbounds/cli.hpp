#pragma once

#include <string>
#include <vector>

namespace aggbounds::cli {

// Dispatches one command line (argv without the program name) and returns the
// process exit code: 0 on success, 2 for input/validation problems, 3 for
// numerical failures.
int run(const std::vector<std::string>& args);

}  // namespace aggbounds::cli
