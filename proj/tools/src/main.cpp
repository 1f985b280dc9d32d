#include <iostream>
#include <string>
#include <vector>

#include "unnas/cli/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return unnas::cli::run_cli(args, std::cout, std::cerr);
}
