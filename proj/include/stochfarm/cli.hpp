#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace stochfarm {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;
inline constexpr int kExitSelfCheck = 3;

/// Entry point for `stochfarm <simulate|benchmark> ...`. `args` excludes the
/// program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

/// Output file for ensemble group `group`: `path` itself without a sweep,
/// otherwise `<stem>_<param>=<label><ext>`.
std::string group_output_path(const std::string& path,
                              const std::string& param,
                              const std::string& label);

}  // namespace stochfarm
