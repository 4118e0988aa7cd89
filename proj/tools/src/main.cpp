#include <iostream>

#include "panoserve/cli.hpp"

int main(int argc, char** argv) { return panoserve::run_cli(argc, argv, std::cout, std::cerr); }
