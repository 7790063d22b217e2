// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace hetcomm::cli {

// Runs the `hetcomm` command line. `args` excludes the program name.
// Returns the process exit code: 0 on success, exit_code_for() of the error
// class otherwise, 2 for malformed command lines.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hetcomm::cli
