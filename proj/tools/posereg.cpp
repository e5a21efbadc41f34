#include <iostream>
#include <string>
#include <vector>

#include "posereg/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return posereg::run_cli(args, std::cout, std::cerr);
}
