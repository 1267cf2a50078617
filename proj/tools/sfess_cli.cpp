#include <iostream>

#include "sfess/cli.hpp"

int main(int argc, char** argv) {
  return sfess::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
