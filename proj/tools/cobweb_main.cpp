#include <iostream>
#include <string>
#include <vector>

#include "cobweb/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return cobweb::run_cli(args, std::cout, std::cerr);
}
