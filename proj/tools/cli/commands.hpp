#pragma once

#include <iosfwd>

#include "cli/config.hpp"
#include "loft/classical.hpp"
#include "loft/eval.hpp"

namespace loft::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

/// Full command-line entry point. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Target from eval.target on the sqrt(tm.n_out) grid: every pixel within `radius` of a listed point.
TargetSpec target_from_config(const Json& cfg);

Json report_to_json(const eval::FocusReport& r);
eval::FocusReport report_from_json(const Json& j);

}  // namespace loft::cli
