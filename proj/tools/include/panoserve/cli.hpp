#pragma once

#include <iosfwd>

namespace panoserve {

/// Entry point of the `nefnet` command. Exit codes: 0 success, 1 failure
/// (one line "error: kind=<kind> message=<text>" on `err`), 2 usage error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace panoserve
