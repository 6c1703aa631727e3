#pragma once

#include <iosfwd>

namespace dbdt::cli {

// Exit codes: 0 success, 1 runtime or numeric failure, 2 usage or input error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dbdt::cli
