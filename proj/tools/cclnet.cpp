#include <iostream>

#include "ccl/cli.hpp"

int main(int argc, char** argv) { return ccl::cli::run(argc, argv, std::cout, std::cerr); }
