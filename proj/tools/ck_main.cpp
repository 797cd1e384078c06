#include <iostream>
#include <string>
#include <vector>

#include "ck/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return ck::run(args, std::cout, std::cerr);
}
