#pragma once
// CLI entry point, separated from main() so the integration tests can
// drive whole subcommands in-process.

namespace shine {

int cli_main(int argc, const char* const* argv);

}  // namespace shine
