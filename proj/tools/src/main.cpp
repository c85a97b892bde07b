#include <iostream>

#include "lazyformer_cli/cli.hpp"

int main(int argc, char** argv) { return lazyformer::cli::run(argc, argv, std::cout, std::cerr); }
