#pragma once

#include <string>
#include <vector>

namespace cpcfl::cli {

// Stable exit-code contract.
constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Runs one CLI invocation ("generate", "pretrain", "federate", "experiment",
// "report" plus flags). Identical inputs and seeds produce byte-identical
// outputs; no command mutates its input files.
int run_cli(const std::vector<std::string>& args);

}  // namespace cpcfl::cli
