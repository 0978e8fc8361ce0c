#include "phreg/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return phreg::cli::run(argc, argv, std::cout, std::cerr); }
