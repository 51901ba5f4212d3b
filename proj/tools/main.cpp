#include <iostream>

#include "gaitid/cli.hpp"

int main(int argc, char** argv) {
  return gaitid::cli::run(argc, argv, std::cout, std::cerr);
}
