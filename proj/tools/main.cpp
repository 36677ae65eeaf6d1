#include <iostream>
#include <string>
#include <vector>

#include "ctxprobe/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return ctxprobe::cli::run(args, std::cout, std::cerr);
}
