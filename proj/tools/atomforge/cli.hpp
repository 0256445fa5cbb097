#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace atomforge::cli {

/// Runs one atomforge invocation. args excludes the program name.
/// Returns the process exit code: 0 ok, 2 config, 3 model, 4 I/O.
/// Failures print one JSON line to err.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace atomforge::cli
