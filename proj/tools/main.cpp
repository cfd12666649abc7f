#include <iostream>

#include "hdspc/cli.hpp"

int main(int argc, char** argv) { return hdspc::run_cli(argc, argv, std::cout, std::cerr); }
