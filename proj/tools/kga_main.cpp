#include <iostream>

#include "kga/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return kga::run_cli(args, std::cout, std::cerr);
}
