#include <iostream>
#include <string>
#include <vector>

#include "cao/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cao::run_cli(args, std::cout, std::cerr);
}
