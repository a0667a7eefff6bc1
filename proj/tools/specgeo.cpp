#include <iostream>
#include <string>
#include <vector>

#include "specgeo/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return specgeo::cli::dispatch(args, std::cout, std::cerr);
}
