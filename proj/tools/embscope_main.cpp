// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "embscope/cli.hpp"

int main(int argc, char** argv) {
  return embscope::cli_dispatch(argc, argv, std::cout, std::cerr);
}
