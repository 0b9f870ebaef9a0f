// Copyright (C) 2026 kvevict contributors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace kvevict::cli {

enum ExitCode : int {
    kExitOk = 0,
    kExitTheoryViolation = 1,
    kExitConfig = 2,
    kExitIo = 3,
    kExitNumeric = 4,
};

/// Runs the tool with `args` (excluding the program name). Machine-readable
/// output goes to `out` unless --out names a file; everything else to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Worker count from KVEVICT_WORKERS, or the hardware thread count when unset.
/// Throws ConfigError for a value that is not a positive integer.
std::size_t workers_from_env();

}  // namespace kvevict::cli
