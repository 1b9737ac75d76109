#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mtsconv {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Runs one `mtsconv` command line. `args` excludes the program name.
// Subcommands: preprocess, synth, train, experiment, report, selftest.
// Returns 0 on success, 2 for usage errors (bad flags, missing files) and 1 for
// runtime failures; error messages go to `err`.
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_dispatch(int argc, const char* const* argv);

}  // namespace mtsconv
