#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace krew {

// Subcommands train, generate, evaluate, bench, serve. Returns 0 on success,
// 2 on usage errors, 1 on operational failures.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_main(int argc, char** argv);

}  // namespace krew
