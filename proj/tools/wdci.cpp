#include <iostream>

#include "wdci/cli.hpp"

int main(int argc, char** argv) { return wdci::run_cli(argc, argv, std::cout, std::cerr); }
