#pragma once

#include <iosfwd>

namespace gaitid::cli {

/// Parses and runs one subcommand. Returns the process exit code: 0 on
/// success, 1 on a toolkit error, 2 on a usage error. Failures print a JSON
/// object {"error": <kind>, "message": <text>} to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gaitid::cli
