#pragma once

// The `kga` command line: generate, train, eval, bench, export-viz.
// Every subcommand writes its outputs plus a run.meta into --out.

#include <iosfwd>
#include <string>
#include <vector>

namespace kga {

/// Runs one invocation; `args` excludes the program name. Structured errors
/// are printed to `err` as a single line. Returns the process exit status.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kga
