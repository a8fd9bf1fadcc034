#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace uthp::cli {

/// Runs the `uthp` command line with the given arguments (argv[0] excluded).
/// Help and results go to `out`; errors go to `err` as one JSON line.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace uthp::cli
