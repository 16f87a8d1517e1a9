#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace patchstyle {

/// Entry point of the `patchstyle` tool. `args` excludes the program name.
/// Returns 0 on success, 2 for usage or configuration errors, 1 for runtime failures.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace patchstyle
