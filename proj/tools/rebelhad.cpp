#include <iostream>

#include "rebelhad/cli.hpp"

int main(int argc, char** argv) { return rebelhad::run_cli(argc, argv, std::cout, std::cerr); }
