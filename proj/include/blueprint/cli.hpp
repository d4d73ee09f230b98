#pragma once

// Command-line front end. Every subcommand reads plain files, runs one
// analysis and writes CSV/JSON/SVG whose first record carries the version and
// the effective configuration.
//
// Exit status: 0 on success, 1 when an analysis fails, 2 on bad usage or
// missing/empty input.

#include <iosfwd>
#include <string>
#include <vector>

namespace blueprint::cli {

int run(int argc, const char* const* argv);

/// Same as above with explicit streams; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace blueprint::cli
