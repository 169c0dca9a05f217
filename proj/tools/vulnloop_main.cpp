#include "vulnloop/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return vulnloop::run_cli(argc, argv, std::cout, std::cerr); }
