#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sfess {

/// Runs one command line; args excludes the program name. Returns the exit
/// code: 0 on success, 2 for usage and config errors, 1 for other failures.
/// Failures write one JSON line {"error": kind, "message": text} to err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sfess
