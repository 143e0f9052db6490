#pragma once

#include <string>
#include <vector>

namespace edr {

/// Runs one subcommand (make-data, train, translate, dump-attention,
/// evaluate, gradcheck) over argv-style arguments (program name excluded).
/// Returns the process exit status: 0 success, 1 usage, 2 config,
/// 3 checkpoint, 4 data.
int run_cli(const std::vector<std::string>& args);

}  // namespace edr
