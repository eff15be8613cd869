#pragma once

#include <ostream>

#include "lineage/cli/config.hpp"

namespace lineage::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitWarnings = 2;

// Each command writes its outputs plus config.json (the resolved config)
// under `out`, and returns an exit code. Errors are reported on `err`.
int cmd_zoo_build(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_detect(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_train_detector(const RunConfig& cfg, std::ostream& out, std::ostream& err);

// Dispatches on cfg.command and maps exceptions to exit codes.
int run_command(const RunConfig& cfg, std::ostream& out, std::ostream& err);

// Full command line: `<command> --config PATH [overrides]`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lineage::cli
