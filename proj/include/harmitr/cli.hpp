#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace harmitr {

/// Entry point of the command-line tool. Returns the process exit status;
/// payload summaries go to `out`, logs and errors to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace harmitr
