#include <iostream>
#include <string>
#include <vector>

#include "capeval/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return capeval::cli::run(args, std::cout, std::cerr);
}
