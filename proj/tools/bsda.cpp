#include <iostream>

#include "bsda/commands.hpp"

int main(int argc, char** argv) {
  return bsda::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
