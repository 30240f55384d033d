#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace affect::cli {

// Runs one command. args excludes the program name. JSON results go to out,
// progress lines to err. Returns 0 on success, 1 on usage or validation
// failure, 2 on runtime failure.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace affect::cli
