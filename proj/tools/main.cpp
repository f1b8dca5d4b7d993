// Copyright 2026 The nullora Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
    return nullora::cli::run(argc, argv, std::cout, std::cerr);
}
