// Copyright 2026 The nullora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>

namespace nullora::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 1,
    kDataError = 2,
    kInvariantFailure = 3,
    kDiverged = 4,
};

/// Entry point for `nullora <analyze|init|train|verify|merge> ...`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace nullora::cli
