#include <iostream>

#include "tensorcalc/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return tensorcalc::run_cli(args, std::cout, std::cerr);
}
