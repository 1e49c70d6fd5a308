#include <iostream>

#include "kgc/pipeline.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return kgc::run_cli(args, std::cout, std::cerr);
}
