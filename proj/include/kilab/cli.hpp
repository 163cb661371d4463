#pragma once

#include <iosfwd>

namespace kilab {

/// Exit codes: 0 success, 1 configuration error, 2 numerical failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv);

}  // namespace kilab
