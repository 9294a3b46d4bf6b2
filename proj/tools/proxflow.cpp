#include <iostream>

#include "proxflow/cli.hpp"

int main(int argc, char** argv) { return proxflow::run_cli(argc, argv, std::cout, std::cerr); }
