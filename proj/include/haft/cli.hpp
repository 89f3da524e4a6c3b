#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace haft {

/// Entry point of the `haft` tool. `args` excludes the program name. Returns the
/// process exit code: 0 success, 2 config error, 3 data error, 4 divergence, 1 other.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace haft
