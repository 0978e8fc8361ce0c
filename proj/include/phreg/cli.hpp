#pragma once

// Subcommands of the phreg executable. Each takes the arguments following the
// subcommand name and returns the process exit code.

#include <iosfwd>
#include <string>
#include <vector>

namespace phreg::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNotConverged = 3;

using Args = std::vector<std::string>;

int cmd_fit(const Args& args, std::ostream& out, std::ostream& err);
int cmd_predict(const Args& args, std::ostream& out, std::ostream& err);
int cmd_gof(const Args& args, std::ostream& out, std::ostream& err);
int cmd_simulate(const Args& args, std::ostream& out, std::ostream& err);
int cmd_study(const Args& args, std::ostream& out, std::ostream& err);

// Dispatches argv[1] to a subcommand.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace phreg::cli
