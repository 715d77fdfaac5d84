// SPDX-License-Identifier: Apache-2.0
#include <csignal>
#include <iostream>
#include <string>
#include <vector>

#include "rco/cli.hpp"

int main(int argc, char** argv) {
  // A code executor that exits without reading stdin must not kill us.
  std::signal(SIGPIPE, SIG_IGN);
  std::vector<std::string> args(argv + 1, argv + argc);
  return rco::run_cli(args, std::cout, std::cerr);
}
