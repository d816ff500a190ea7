// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "ghpo/cli.hpp"

int main(int argc, char** argv) {
  return ghpo::cli::run(argc, argv, std::cout, std::cerr);
}
