// Copyright (c) 2026, CortexNet contributors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "cortex/cli.hpp"

int main(int argc, char** argv) {
    return cortex::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
