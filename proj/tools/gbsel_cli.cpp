#include <iostream>
#include <string>
#include <vector>

#include "gbsel/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return gbsel::run_cli(args, std::cout, std::cerr);
}
