#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace innlat::cli {

/// Runs one subcommand. Returns the process exit status: 0 on success,
/// 2 config error, 3 I/O error, 4 numeric failure, 5 invariant violation.
/// Diagnostics go to `err` as a single line.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace innlat::cli
