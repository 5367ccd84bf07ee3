#pragma once

namespace nes::cli {

/// Parses arguments and runs one subcommand; returns the process exit code.
int run(int argc, const char* const* argv);

}  // namespace nes::cli
