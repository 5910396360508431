#include <iostream>

#include "fairaudit/cli.hpp"

int main(int argc, char** argv) { return fairaudit::cli::run(argc, argv, std::cout, std::cerr); }
