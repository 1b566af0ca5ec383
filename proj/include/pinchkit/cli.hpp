#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace pinchkit {

/// Exit codes: 0 success, 1 internal failure, 2 configuration or missing
/// input, 3 output I/O failure.
int runCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pinchkit
