// Copyright (c) 2026, CortexNet contributors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: gen, stats, train and eval subcommands.
//
// Every subcommand accepts `--config <file>` with flat `key = value` lines
// (blank lines and `#` comments ignored). Keys are the long option names
// without dashes; options given on the command line take precedence.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace cortex::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kIo = 2, kNumerical = 3 };

/// Parses a key = value file; later duplicates win. Throws ConfigError on a
/// malformed line and IoError when unreadable.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path& path);

/// Runs the command line (argv[0] is the program name).
int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

}  // namespace cortex::cli
