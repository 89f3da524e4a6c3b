#include <iostream>

#include "haft/cli.hpp"

int main(int argc, char** argv) {
  return haft::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
