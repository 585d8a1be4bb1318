#include <iostream>

#include "ioodg/cli.hpp"

int main(int argc, char** argv) {
  return ioodg::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
