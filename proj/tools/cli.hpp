#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tokentiming::cli {

// args excludes the program name. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tokentiming::cli
