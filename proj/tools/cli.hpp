#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace tsvan {

// Entry point of the command-line tool. Returns the process exit code:
// 0 on success, 1 on validation errors and usage errors, 2 on I/O errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tsvan
