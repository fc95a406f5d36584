#pragma once

namespace touchloc {

// Entry point for the `touchloc` tool; returns the process exit code
// (0 ok, 2 config error, 3 artifact mismatch, 4 runtime/numeric error).
int run_cli(int argc, char** argv);

}  // namespace touchloc
