#include <iostream>

#include "dopbc/cli.hpp"

int main(int argc, char** argv) { return dopbc::cli::main(argc, argv, std::cout, std::cerr); }
