#include <iostream>

#include "pplw/cli.hpp"

int main(int argc, char** argv) { return pplw::run_cli(argc, argv, std::cout, std::cerr); }
