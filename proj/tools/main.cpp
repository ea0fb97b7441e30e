#include <iostream>

#include "bilevel_lb/cli.hpp"

int main(int argc, char** argv) { return bilevel_lb::run_cli(argc, argv, std::cout, std::cerr); }
