#include <iostream>
#include <string>
#include <vector>

#include "routoo/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return routoo::cli_dispatch(args, std::cout, std::cerr);
}
