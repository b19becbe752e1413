#pragma once

#include <string>
#include <vector>

namespace rembed::cli {

// Entry point behind the `rembed` binary. Exit codes: 0 success, 2 usage,
// 3 schema/contract violation, 4 numeric failure, 1 I/O or unexpected error.
int run(const std::vector<std::string>& args);

}  // namespace rembed::cli
