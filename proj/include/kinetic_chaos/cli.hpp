#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace kc {

// Exit codes: 0 success, 1 failed verify check or unexpected error,
// 2 configuration or input error, 3 degenerate-event policy rejection.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kc
